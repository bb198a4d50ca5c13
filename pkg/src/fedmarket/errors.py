"""Exception type shared by every module of the package."""

from __future__ import annotations


class MarketError(ValueError):
    """Raised on contract violations.

    ``code`` is a short stable identifier (``"empty-dataset"``, ``"shape"``,
    ``"bad-lr"``, ``"too-many-clients"``, ``"bad-config"``, ...) that callers
    and tests match on instead of parsing the message.
    """

    def __init__(self, code: str, message: str = "", *, round_index: int | None = None):
        self.code = code
        self.round_index = round_index
        text = f"{code}: {message}" if message else code
        if round_index is not None:
            text = f"{text} (round {round_index})"
        super().__init__(text)
