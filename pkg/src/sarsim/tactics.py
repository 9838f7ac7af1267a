"""Motion tactics available to a squad inside a room."""

import enum


class Tactic(enum.Enum):
    """Per-room traversal tactic.

    FREE is used under unrestricted vision and allows every graph edge.
    WALL_LHR / WALL_RHR are the left-/right-hand wall-search variants used
    under restricted vision; they only allow edges close to walls and with
    the matching traversal chirality.
    """

    FREE = "FREE"
    WALL_LHR = "WALL_LHR"
    WALL_RHR = "WALL_RHR"

    @property
    def is_wall(self) -> bool:
        return self is not Tactic.FREE

    @classmethod
    def parse(cls, text: str) -> "Tactic":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ValueError(f"unknown tactic {text!r}; expected one of "
                             f"{[t.value for t in cls]}") from None
