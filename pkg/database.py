"""
Database models and operations for evaluation results
"""
import logging
import os
from datetime import datetime
from typing import Dict, List, Optional

import pandas as pd
from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, create_engine
from sqlalchemy.orm import declarative_base, relationship, sessionmaker

logger = logging.getLogger(__name__)

DATABASE_URL_ENV = 'ENHANCE_ABR_DATABASE_URL'
SQLITE_FALLBACK_URL = "sqlite:///enhance_abr_results.db"

Base = declarative_base()


class EvaluationRun(Base):
    __tablename__ = 'evaluation_runs'

    id = Column(Integer, primary_key=True, autoincrement=True)
    policy = Column(String, nullable=False)
    split = Column(String, nullable=False)
    profile = Column(String, nullable=False)
    alpha1 = Column(Float)
    alpha2 = Column(Float)
    alpha3 = Column(Float)
    seeds = Column(Integer)
    config_hash = Column(String)
    mean_qoe = Column(Float)
    std_qoe = Column(Float)
    mean_psnr = Column(Float)
    created_at = Column(DateTime, default=datetime.now)

    episodes = relationship("EpisodeResult", back_populates="run", cascade="all, delete-orphan")


class EpisodeResult(Base):
    __tablename__ = 'episode_results'

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey('evaluation_runs.id'))
    episode_id = Column(Integer, nullable=False)
    seed = Column(Integer)
    video = Column(String)
    trace = Column(String)
    avg_psnr = Column(Float)
    avg_variation = Column(Float)
    avg_rebuffer = Column(Float)
    qoe = Column(Float)

    run = relationship("EvaluationRun", back_populates="episodes")


class DatabaseManager:
    """Manages the results store connection and operations"""

    def __init__(self, database_url: Optional[str] = None):
        self.database_url = database_url or self._get_database_url()
        try:
            self._connect(self.database_url)
            logger.info(f"results store connected: {self.database_url.split('@')[-1]}")
        except Exception as e:
            logger.warning(f"results store connection failed ({e}); falling back to SQLite")
            self.database_url = SQLITE_FALLBACK_URL
            self._connect(self.database_url)

    def _get_database_url(self) -> str:
        url = os.getenv(DATABASE_URL_ENV)
        if url:
            return url
        return SQLITE_FALLBACK_URL

    def _connect(self, url: str):
        self.engine = create_engine(url)
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)
        Base.metadata.create_all(bind=self.engine)

    def get_session(self):
        """Get a database session"""
        return self.SessionLocal()

    def save_report(self, report: Dict) -> int:
        """Store an evaluation report with its episodes; returns the run id"""
        session = self.get_session()
        try:
            summary = report['summary']
            alpha1, alpha2, alpha3 = (float(w) for w in report['weights'])
            run = EvaluationRun(
                policy=report['policy'],
                split=report['split'],
                profile=report['profile'],
                alpha1=alpha1, alpha2=alpha2, alpha3=alpha3,
                seeds=int(report['seeds']),
                config_hash=report.get('config_hash'),
                mean_qoe=float(summary['mean_qoe']),
                std_qoe=float(summary['std_qoe']),
                mean_psnr=float(summary['mean_psnr']),
            )
            for episode in report.get('episodes', []):
                run.episodes.append(EpisodeResult(
                    episode_id=int(episode['episode_id']),
                    seed=int(episode['seed']),
                    video=episode['video'],
                    trace=episode['trace'],
                    avg_psnr=float(episode['avg_psnr']),
                    avg_variation=float(episode['avg_variation']),
                    avg_rebuffer=float(episode['avg_rebuffer']),
                    qoe=float(episode['qoe']),
                ))
            session.add(run)
            session.commit()
            session.refresh(run)
            print(f"💾 Stored evaluation run {run.id} ({run.policy})")
            return run.id
        finally:
            session.close()

    def list_runs(self) -> List[Dict]:
        session = self.get_session()
        try:
            runs = session.query(EvaluationRun).order_by(EvaluationRun.id).all()
            return [
                {
                    'id': run.id,
                    'policy': run.policy,
                    'split': run.split,
                    'profile': run.profile,
                    'weights': [run.alpha1, run.alpha2, run.alpha3],
                    'mean_qoe': run.mean_qoe,
                    'std_qoe': run.std_qoe,
                    'episode_count': len(run.episodes),
                    'created_at': run.created_at,
                }
                for run in runs
            ]
        finally:
            session.close()

    def get_run(self, run_id: int) -> Optional[Dict]:
        """Run metadata and its episodes, or None"""
        session = self.get_session()
        try:
            run = session.query(EvaluationRun).filter(EvaluationRun.id == run_id).first()
            if not run:
                return None
            return {
                'run': {
                    'id': run.id,
                    'policy': run.policy,
                    'split': run.split,
                    'profile': run.profile,
                    'weights': [run.alpha1, run.alpha2, run.alpha3],
                    'seeds': run.seeds,
                    'config_hash': run.config_hash,
                    'mean_qoe': run.mean_qoe,
                    'std_qoe': run.std_qoe,
                    'mean_psnr': run.mean_psnr,
                },
                'episodes': [
                    {
                        'episode_id': e.episode_id,
                        'seed': e.seed,
                        'video': e.video,
                        'trace': e.trace,
                        'avg_psnr': e.avg_psnr,
                        'avg_variation': e.avg_variation,
                        'avg_rebuffer': e.avg_rebuffer,
                        'qoe': e.qoe,
                    }
                    for e in sorted(run.episodes, key=lambda e: e.episode_id)
                ],
            }
        finally:
            session.close()

    def export_to_csv(self, run_id: int) -> Optional[str]:
        """Episodes of a run as CSV text"""
        data = self.get_run(run_id)
        if not data:
            return None
        return pd.DataFrame(data['episodes']).to_csv(index=False)
