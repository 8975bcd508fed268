#!/usr/bin/env python3
"""
Command-line entry point.

    enhance-abr generate                      build the synthetic corpus
    enhance-abr train [--no-enhance]          train the actor-critic agent
    enhance-abr evaluate --policy NAME ...    multi-seed evaluation report(s)
    enhance-abr compare REPORT REPORT ...     comparison table, improvements, figure
    enhance-abr compare --by-profile REPORT ...  mean PSNR of each policy per compute profile
    enhance-abr oracle                        exhaustive optimum on a small instance

Every command accepts --config FILE, repeated --set section.key=value and
--log-level. Errors are reported as one JSON object on stderr.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from config import AppConfig, config_hash, get_profile, load_config
from corpus_manager import CorpusManager
from database import DatabaseManager
from errors import EnhanceAbrError
from experiment import ExperimentRunner, make_sim_config
from oracle import exhaustive_best
from qoe import QoeWeights
from quality_model import load_mpd
from report_manager import ReportManager, profile_sweep, psnr_falls_with_slower_devices
from rl_agent import save_checkpoint
from traces import load_trace

logger = logging.getLogger(__name__)

EXIT_DOMAIN_ERROR = 2
EXIT_UNEXPECTED = 1


def parse_weights(text: str) -> QoeWeights:
    """Preset name (mild, moderate, strict) or 'a1,a2,a3'"""
    if ',' in text:
        return QoeWeights.from_value([float(v) for v in text.split(',')])
    return QoeWeights.from_value(text)


def _emit(payload):
    print(json.dumps(payload, indent=2, sort_keys=True, default=str))


def cmd_generate(config: AppConfig, args) -> int:
    summary = CorpusManager(config.corpus.output_dir).generate(config)
    _emit({'command': 'generate', 'config_hash': summary['config_hash'],
           'videos': {s: len(v) for s, v in summary['videos'].items()},
           'traces': {s: len(t) for s, t in summary['traces'].items()}})
    return 0


def cmd_train(config: AppConfig, args) -> int:
    allow_enhance = config.training.allow_enhance and not args.no_enhance
    runner = ExperimentRunner(config)
    params, curve = runner.train_agent(allow_enhance=allow_enhance)

    checkpoint = args.output or config.training.checkpoint
    curve_path = args.curve or config.training.curve
    for path in (checkpoint, curve_path):
        if os.path.dirname(path):
            os.makedirs(os.path.dirname(path), exist_ok=True)
    digest = config_hash(config)
    save_checkpoint(params, checkpoint, metadata={'config_hash': digest, 'allow_enhance': allow_enhance,
                                                  'episodes': config.training.episodes})
    curve.to_csv(curve_path, index=False)
    print(f"💾 Saved checkpoint: {checkpoint}")

    result = {'command': 'train', 'config_hash': digest, 'checkpoint': checkpoint, 'curve': curve_path,
              'episodes': int(len(curve))}
    if len(curve):
        window = max(1, len(curve) // 10)
        result['initial_mean_qoe'] = float(curve['qoe'].head(window).mean())
        result['final_mean_qoe'] = float(curve['qoe'].tail(window).mean())
        result['final_entropy'] = float(curve['entropy'].tail(window).mean())
    _emit(result)
    return 0


def cmd_evaluate(config: AppConfig, args) -> int:
    runner = ExperimentRunner(config)
    manager = ReportManager(args.output_dir or config.evaluation.output_dir)
    weights = parse_weights(args.weights) if args.weights else None
    store = DatabaseManager() if args.store else None

    written = []
    for profile in args.profile or [config.evaluation.profile]:
        report = runner.evaluate(args.policy, split=args.split, weights=weights, profile=profile, seeds=args.seeds)
        path = manager.save_report(report)
        manager.export_psnr_cdf(report)
        manager.export_episode_table(report)
        if store is not None:
            store.save_report(report)
        if args.verbose_report:
            print(manager.generate_analysis_report(report))
        written.append({'report': path, 'profile': profile, 'mean_qoe': report['summary']['mean_qoe'],
                        'std_qoe': report['summary']['std_qoe'], 'config_hash': report['config_hash']})
    _emit({'command': 'evaluate', 'policy': args.policy, 'reports': written})
    return 0


def cmd_compare(config: AppConfig, args) -> int:
    manager = ReportManager(args.output_dir or config.evaluation.output_dir)
    reports = [manager.load_report(path) for path in args.reports]
    payload = {'command': 'compare', 'config_hash': config_hash(config)}
    if args.by_profile:
        payload['outputs'] = manager.write_profile_sweep(reports, stem=args.stem)
        sweep = profile_sweep(reports)
        payload['psnr_falls_with_slower_devices'] = psnr_falls_with_slower_devices(sweep)
    else:
        payload['outputs'] = manager.write_comparison(reports, stem=args.stem)
    _emit(payload)
    return 0


def cmd_oracle(config: AppConfig, args) -> int:
    profile = get_profile(args.profile or config.evaluation.profile)
    if args.video and args.trace:
        mpd, trace = load_mpd(args.video), load_trace(args.trace)
    else:
        split = CorpusManager(config.corpus.output_dir).load_split(config.evaluation.split)
        mpd, trace = split.videos[0][1], split.traces[0][1]
    weights = parse_weights(args.weights) if args.weights else config.qoe_weights()
    o = config.oracle
    horizon = min(args.horizon or o.horizon, mpd.num_chunks)
    result = exhaustive_best(make_sim_config(mpd, trace, profile, config.simulation), weights,
                             horizon=horizon, budget=args.budget or o.budget, workers=o.workers)
    payload = {'command': 'oracle', 'config_hash': config_hash(config), 'horizon': horizon,
               'profile': profile.name, 'weights': list(weights.as_tuple()), **result.to_dict()}
    if args.output:
        with open(args.output, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2)
    _emit(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="Override one config key (value parsed as JSON, else string). Repeatable.")
    common.add_argument("--log-level", type=str, default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = argparse.ArgumentParser(prog="enhance-abr", description="Enhancement-aware ABR simulator and trainer")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="Build the synthetic video and trace corpus")
    g.set_defaults(handler=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="Train the actor-critic agent on the train split")
    t.add_argument("--no-enhance", action="store_true", help="Mask out enhancement (no-enhance agent variant)")
    t.add_argument("--output", type=str, default=None, help="Checkpoint path")
    t.add_argument("--curve", type=str, default=None, help="Training curve CSV path")
    t.set_defaults(handler=cmd_train)

    e = sub.add_parser("evaluate", parents=[common], help="Evaluate a policy over several seeds")
    e.add_argument("--policy", type=str, required=True,
                   help="bdash | greedy | greedy-noenhance | random | fixed:<index> | checkpoint .json")
    e.add_argument("--split", type=str, default=None, choices=["train", "test"])
    e.add_argument("--profile", type=str, action="append", default=None,
                   help="Compute profile; repeat for a sweep")
    e.add_argument("--weights", type=str, default=None, help="Preset name or a1,a2,a3")
    e.add_argument("--seeds", type=int, default=None)
    e.add_argument("--output-dir", type=str, default=None)
    e.add_argument("--store", action="store_true", help="Also store the report in the results database")
    e.add_argument("--verbose-report", action="store_true", help="Print the text analysis report")
    e.set_defaults(handler=cmd_evaluate)

    c = sub.add_parser("compare", parents=[common], help="Compare evaluation reports")
    c.add_argument("reports", nargs="+", help="Report JSON files")
    c.add_argument("--output-dir", type=str, default=None)
    c.add_argument("--stem", type=str, default="comparison")
    c.add_argument("--by-profile", action="store_true",
                   help="Tabulate each policy across compute profiles instead of comparing policies")
    c.set_defaults(handler=cmd_compare)

    o = sub.add_parser("oracle", parents=[common], help="Exhaustive optimum on a small instance")
    o.add_argument("--video", type=str, default=None, help="MPD JSON (default: first video of the split)")
    o.add_argument("--trace", type=str, default=None, help="Trace CSV (default: first trace of the split)")
    o.add_argument("--profile", type=str, default=None)
    o.add_argument("--weights", type=str, default=None)
    o.add_argument("--horizon", type=int, default=None)
    o.add_argument("--budget", type=int, default=None)
    o.add_argument("--output", type=str, default=None)
    o.set_defaults(handler=cmd_oracle)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, args.overrides)
        return args.handler(config, args)
    except EnhanceAbrError as e:
        sys.stderr.write(json.dumps({'error': type(e).__name__, 'message': str(e)}) + "\n")
        return EXIT_DOMAIN_ERROR
    except Exception as e:
        logger.debug("unexpected failure", exc_info=True)
        sys.stderr.write(json.dumps({'error': type(e).__name__, 'message': str(e)}) + "\n")
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
