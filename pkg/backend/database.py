"""
Database helpers and tables for the mortality forecast toolkit.

The prediction log file is the normative record of the batch scorer; these
tables mirror it (and the activity log) into the hospital database when a
URL is configured.
"""

# Standard library imports
from contextlib import contextmanager
from datetime import datetime
from functools import lru_cache

# Third-party imports
from sqlalchemy import Column, DateTime, Float, Integer, String, Text, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker
from sqlalchemy.sql import func

Base = declarative_base()


class PredictionRecord(Base):
    __tablename__ = "predictions"

    id = Column(Integer, primary_key=True, index=True)
    timestamp = Column(String, nullable=False)  # RFC 3339, as written to the log
    patient_id = Column(String, nullable=False, index=True)
    episode_id = Column(String, nullable=False, index=True)
    score = Column(Float, nullable=False)
    label = Column(Integer, nullable=False)
    threshold = Column(Float, nullable=False)
    model_version = Column(Integer, nullable=False)
    model_fingerprint = Column(String, nullable=False)
    created_at = Column(DateTime, default=datetime.utcnow)


class ActivityLog(Base):
    __tablename__ = "pipeline_activity"

    id = Column(Integer, primary_key=True, index=True)
    component = Column(String, nullable=False)
    activity_type = Column(String, nullable=False)
    activity_details = Column(Text, nullable=True)
    timestamp = Column(DateTime, default=func.now())


@lru_cache(maxsize=8)
def get_engine(database_url: str):
    """Engine per URL; SQLite gets a busy timeout to avoid locking errors"""
    connect_args = {
        "check_same_thread": False,
        "timeout": 30,
    } if database_url.startswith("sqlite") else {}

    engine = create_engine(
        database_url,
        connect_args=connect_args,
        pool_pre_ping=True,
        echo=False
    )
    Base.metadata.create_all(bind=engine)
    return engine


@contextmanager
def session_scope(database_url: str):
    """Context manager for database sessions with proper cleanup"""
    session_factory = sessionmaker(autocommit=False, autoflush=False, bind=get_engine(database_url))
    db = session_factory()
    try:
        yield db
        db.commit()
    except Exception:
        db.rollback()
        raise
    finally:
        db.close()


def init_db(database_url: str):
    """Create all tables for the given URL"""
    Base.metadata.create_all(bind=get_engine(database_url))
