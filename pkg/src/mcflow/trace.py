"""Per-iteration trace records shared by the iterative layers."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Trace:
    """Append-only list of flat records; ``None`` sinks are accepted everywhere."""

    records: list[dict] = field(default_factory=list)

    def emit(self, layer: str, **fields) -> None:
        rec = {"layer": layer}
        rec.update(fields)
        self.records.append(rec)

    def of(self, layer: str) -> list[dict]:
        return [r for r in self.records if r["layer"] == layer]

    def __len__(self) -> int:
        return len(self.records)


def emit(sink: Trace | None, layer: str, **fields) -> None:
    if sink is not None:
        sink.emit(layer, **fields)
