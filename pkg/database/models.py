import os
from datetime import datetime

from dotenv import load_dotenv
from sqlalchemy import Boolean, Column, DateTime, Float, Integer, String, Text, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker
from sqlalchemy.pool import StaticPool

load_dotenv()

Base = declarative_base()


class EpisodeRecord(Base):
    __tablename__ = "episode_records"
    id = Column(Integer, primary_key=True)
    request_id = Column(String, index=True, nullable=True)
    batch_label = Column(String, nullable=True)
    controller = Column(String, nullable=False)
    family = Column(String, nullable=False)
    size = Column(Float, nullable=False)
    scene_seed = Column(Integer, default=0)
    seed = Column(Integer, default=0)
    termination = Column(String, nullable=False)
    time_to_goal_s = Column(Float, nullable=True)
    duration_s = Column(Float, default=0.0)
    max_penetration_m = Column(Float, default=0.0)
    final_coverage = Column(Float, default=0.0)
    starved = Column(Boolean, default=False)
    error = Column(Text, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "request_id": self.request_id,
            "batch_label": self.batch_label,
            "controller": self.controller,
            "family": self.family,
            "size": self.size,
            "scene_seed": self.scene_seed,
            "seed": self.seed,
            "termination": self.termination,
            "time_to_goal_s": self.time_to_goal_s,
            "duration_s": self.duration_s,
            "max_penetration_m": self.max_penetration_m,
            "final_coverage": self.final_coverage,
            "starved": self.starved,
            "error": self.error,
            "created_at": self.created_at.isoformat() if self.created_at else None,
        }


DB_URL = os.getenv("DATABASE_URL", "sqlite:///pampc_runs.db")


def make_engine(url: str):
    if url.startswith("sqlite"):
        if ":memory:" in url or url in ("sqlite://", "sqlite:///"):
            # one shared connection so every thread sees the same in-memory database
            return create_engine(url, connect_args={"check_same_thread": False}, poolclass=StaticPool)
        return create_engine(url, connect_args={"check_same_thread": False})
    return create_engine(url)


engine = make_engine(DB_URL)
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


def init_db():
    Base.metadata.create_all(bind=engine)
