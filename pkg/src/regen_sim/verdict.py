from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class Verdict:
    """Outcome of a check; ``witness`` describes the first failure found."""

    ok: bool
    check: str = ""
    witness: dict[str, Any] | None = None
    stats: dict[str, Any] = field(default_factory=dict)

    def __bool__(self):
        return self.ok

    def to_dict(self) -> dict:
        out = {"check": self.check, "ok": self.ok}
        if self.witness is not None:
            out["witness"] = self.witness
        if self.stats:
            out["stats"] = self.stats
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
