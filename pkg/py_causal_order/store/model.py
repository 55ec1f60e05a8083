import contextlib
from typing import ClassVar, Iterator, Optional, Self

from loguru import logger
from sqlalchemy import Engine
from sqlmodel import SQLModel

from py_causal_order.core.errors import UsageError
from py_causal_order.store.session import RunStoreSession


class RunStoreNotOpenError(UsageError): ...


class RunStoreModel(SQLModel):
    """
    Base class of the persisted evaluation tables. The engine is held at class level and set once
    by `open_run_store`; sessions are created from it on demand.
    """

    __table_args__ = {"extend_existing": True}
    _engine: ClassVar[Optional[Engine]] = None

    @classmethod
    def set_engine(cls, engine: Engine) -> None:
        cls._engine = engine

    @classmethod
    def get_engine(cls) -> Engine:
        if cls._engine is None:
            raise RunStoreNotOpenError("[ENGINE NOT SET] Run store is not open")
        return cls._engine

    def clone(self) -> Self:
        return self.model_validate_json(self.model_dump_json())

    @classmethod
    def create_session(cls) -> RunStoreSession:
        return RunStoreSession(cls.get_engine(), expire_on_commit=False)

    @classmethod
    @contextlib.contextmanager
    def create_managed_session(cls) -> Iterator[RunStoreSession]:
        """
        Commit on normal exit, roll back and re-raise on error, always close.
        ## Example Syntax:
            with RunStoreModel.create_managed_session() as session:
                session.add(record)
        """
        session = cls.create_session()
        try:
            yield session
            logger.debug("[RUN STORE COMMIT] Session committing...")
            session.commit()
            session.refresh_tracked_instances()
            logger.debug("[RUN STORE COMMIT] Session committed.")
        except Exception as error:
            logger.error(error)
            logger.error("[RUN STORE ROLLBACK] Session rolling back...")
            session.rollback()
            raise
        finally:
            session.close()
