from contextlib import _GeneratorContextManager
from pathlib import Path
from typing import Any, Generic, Iterable, Optional, Type, TypeVar, Union, get_args

from loguru import logger
from py_spring_core import Component
from sqlalchemy import create_engine
from sqlalchemy.pool import StaticPool
from sqlmodel import Session, SQLModel, select

from py_causal_order.store.model import RunStoreModel
from py_causal_order.store.run_record import EvalRunRecord
from py_causal_order.store.session import RunStoreSession

T = TypeVar("T", bound=RunStoreModel)
ID = TypeVar("ID", bound=int)


class CrudRepository(Component, Generic[ID, T]):
    """
    Basic CRUD operations over one run-store table. Every public method runs in its own managed
    session and returns detached clones, so results stay usable after the session closes.
    """

    def __init__(self) -> None:
        super().__init__()
        self.id_type, self.model_class = self._get_model_id_type_with_class()

    @classmethod
    def _get_model_id_type_with_class(cls) -> tuple[Type[ID], Type[T]]:
        return get_args(tp=cls.__orig_bases__[0])  # type: ignore[attr-defined]

    def create_managed_session(self) -> _GeneratorContextManager[RunStoreSession]:
        return RunStoreModel.create_managed_session()

    def _find_by_query(self, query_by: dict[str, Any], session: Session) -> Optional[T]:
        return session.exec(select(self.model_class).filter_by(**query_by)).first()

    def find_by_id(self, id: ID) -> Optional[T]:
        with self.create_managed_session() as session:
            entity = self._find_by_query({"id": id}, session)
            return None if entity is None else entity.clone()

    def find_all(self) -> list[T]:
        with self.create_managed_session() as session:
            return [entity.clone() for entity in session.exec(select(self.model_class)).all()]

    def find_all_by_query(self, query_by: dict[str, Any]) -> list[T]:
        with self.create_managed_session() as session:
            statement = select(self.model_class).filter_by(**query_by)
            return [entity.clone() for entity in session.exec(statement).all()]

    def save(self, entity: T) -> T:
        with self.create_managed_session() as session:
            session.add(entity)
        return entity.clone()

    def save_all(self, entities: Iterable[T]) -> bool:
        with self.create_managed_session() as session:
            session.add_all(entities)
        return True

    def upsert(self, entity: T, query_by: dict[str, Any]) -> T:
        with self.create_managed_session() as session:
            existing = self._find_by_query(query_by, session)
            if existing is None:
                session.add(entity)
                return entity
            for key, value in entity.model_dump(exclude={"id"}).items():
                setattr(existing, key, value)
            session.add(existing)
            return existing

    def delete_all_by_query(self, query_by: dict[str, Any]) -> int:
        with self.create_managed_session() as session:
            entities = session.exec(select(self.model_class).filter_by(**query_by)).all()
            for entity in entities:
                session.delete(entity)
            return len(entities)


def _run_key_query(
    fingerprint: str, ordering_mode: str, weighting: str, seed: int, graph_source: Optional[str], k: Optional[int]
) -> dict[str, Any]:
    # None matches NULL columns: filter_by renders `column == None` as IS NULL
    return {
        "fingerprint": fingerprint,
        "graph_source": graph_source,
        "ordering_mode": ordering_mode,
        "weighting": weighting,
        "k": k,
        "seed": seed,
    }


class EvalRunRepository(CrudRepository[int, EvalRunRecord]):
    def find_by_run_key(
        self,
        fingerprint: str,
        ordering_mode: str,
        weighting: str,
        seed: int,
        graph_source: Optional[str] = None,
        k: Optional[int] = None,
    ) -> Optional[EvalRunRecord]:
        runs = self.find_all_by_query(_run_key_query(fingerprint, ordering_mode, weighting, seed, graph_source, k))
        return runs[0] if len(runs) > 0 else None

    def find_all_by_fingerprint(self, fingerprint: str) -> list[EvalRunRecord]:
        return self.find_all_by_query({"fingerprint": fingerprint})

    def upsert_run(self, record: EvalRunRecord) -> EvalRunRecord:
        return self.upsert(
            record,
            _run_key_query(
                record.fingerprint, record.ordering_mode, record.weighting, record.seed, record.graph_source, record.k
            ),
        )

    def delete_all_by_fingerprint(self, fingerprint: str) -> int:
        return self.delete_all_by_query({"fingerprint": fingerprint})


def open_run_store(path: Union[str, Path]) -> EvalRunRepository:
    """Open (creating if needed) the SQLite run store at `path`; ':memory:' keeps it in memory."""
    if str(path) == ":memory:":
        engine = create_engine("sqlite://", poolclass=StaticPool, connect_args={"check_same_thread": False})
    else:
        engine = create_engine(f"sqlite:///{Path(path)}")
    RunStoreModel.set_engine(engine)
    SQLModel.metadata.create_all(engine, tables=[EvalRunRecord.__table__])  # type: ignore[attr-defined]
    logger.info(f"[RUN STORE OPEN] Run store ready at {path}")
    return EvalRunRepository()
