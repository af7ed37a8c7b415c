""" Database table mappings for recording evaluation runs. """

import datetime

import sqlalchemy

from contextlib import contextmanager

from sqlalchemy import Column, Float, Integer, JSON, String
from sqlalchemy.ext.compiler import compiles
from sqlalchemy.orm import declarative_base, sessionmaker


TIMESTAMPTZ = sqlalchemy.types.TIMESTAMP(timezone=True)

Base = declarative_base()


@compiles(JSON, "postgresql")
def compile_json_postgresql(type_, compiler, **kw):
    """ Override JSON type on Postgres to use JSONB. """
    return "JSONB"


@compiles(JSON, "sqlite")
def compile_json_sqlite(type_, compiler, **kw):
    """ Override JSON type on SQLite to use Text. """
    return "TEXT"


class EvaluationRun(Base):
    """ Records the metrics and configuration of one evaluation report. """

    __tablename__ = 'evaluation_run'

    id = Column(Integer, primary_key=True)
    timestamp = Column(TIMESTAMPTZ, nullable=False)
    label = Column(String(64))
    split = Column(String(16))
    mrr = Column(Float)
    hits_at_1 = Column(Float)
    hits_at_3 = Column(Float)
    hits_at_10 = Column(Float)
    num_queries = Column(Integer)
    config = Column(JSON)
    per_relation = Column(JSON)

    def __repr__(self):
        """ Nicer repr. """
        return (
            f"<{self.__class__.__name__} {self.timestamp} {self.label or self.split} MRR {self.mrr}>"
        )


@contextmanager
def session_scope(engine):
    """ Provide a transactional scope around a series of operations. """
    # https://stackoverflow.com/a/29805305/648162
    session = sessionmaker(bind=engine)()
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()


def record_report(engine, report, timestamp=None):
    """ Store an EvalReport as a row of the evaluation_run table, creating the table if needed. """
    Base.metadata.create_all(engine)
    row = EvaluationRun(timestamp=timestamp or datetime.datetime.now().astimezone(),
                        label=report.label,
                        split=report.config.get('split'),
                        mrr=report.mrr,
                        hits_at_1=report.hits[1],
                        hits_at_3=report.hits[3],
                        hits_at_10=report.hits[10],
                        num_queries=report.num_queries,
                        config=report.config,
                        per_relation={str(key): value for key, value in report.per_relation.items()})
    with session_scope(engine) as session:
        session.add(row)
        session.flush()
        return row.id
