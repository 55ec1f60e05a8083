from sqlmodel import Session, SQLModel


class RunStoreSession(Session):
    """
    Session that remembers the instances added through it, so a managed session can refresh them
    after commit and hand back rows with their generated ids. `add_all` goes through `add`.
    """

    def __init__(self, *args, **kwargs):
        self.tracked_instances: list[SQLModel] = []
        super().__init__(*args, **kwargs)

    def add(self, instance: SQLModel, _warn: bool = True) -> None:
        self.tracked_instances.append(instance)
        return super().add(instance, _warn)

    def refresh_tracked_instances(self) -> None:
        for instance in self.tracked_instances:
            if instance in self:
                self.refresh(instance)
