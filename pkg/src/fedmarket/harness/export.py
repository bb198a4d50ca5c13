"""CSV ledgers.

Every file opens with a ``# schema: <name> v1`` comment line followed by a
header row. Floats are written with ``repr`` so a reader gets back the exact
values and reruns of the same config produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import MarketError
from ..market import MarketResult, RoundRecord
from ..settlement import ContributionLedger

ROUNDS_COLUMNS = ("t", "client_id", "gamma", "shapley", "theta", "weight", "reward", "val_acc", "test_acc")
CLIENTS_COLUMNS = ("client_id", "n_i", "reward_rate", "P", "GS", "C", "EMD", "P_norm_max", "P_norm_total")
SETTLEMENT_COLUMNS = ("client_id", "CE", "CV")
CURVE_COLUMNS = ("t", "train_acc", "val_acc", "test_acc")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(schema: str, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {schema} v1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write(path: Path, schema: str, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.write_text(render(schema, columns, rows))
    return path


def read(path: Path) -> tuple[str, list[dict[str, str]]]:
    """Return the schema line's name and the rows as dicts of strings."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# schema: "):
        raise MarketError("bad-csv", f"{path}: missing schema line")
    schema = lines[0][len("# schema: "):].rsplit(" ", 1)[0]
    return schema, list(csv.DictReader(lines[1:]))


def round_rows(records: Sequence[RoundRecord]) -> list[tuple]:
    """One row per (round, selected client)."""
    return [
        (r.t, c, r.gamma[c], r.shapley[c], r.theta[c], r.weight[c], r.reward[c], r.val_acc, r.test_acc)
        for r in records
        for c in r.selected
    ]


def client_rows(result: MarketResult, ledger: ContributionLedger) -> list[tuple]:
    counts = result.state.counts.tolist()
    rewards = result.state.reward_sum.tolist()
    p_max = max(ledger.P) or 1
    p_total = sum(ledger.P) or 1
    return [
        (
            i,
            counts[i],
            rewards[i] / counts[i] if counts[i] else 0.0,
            ledger.P[i],
            ledger.GS[i],
            ledger.C[i],
            ledger.EMD[i],
            ledger.P[i] / p_max,
            ledger.P[i] / p_total,
        )
        for i in range(ledger.n_clients)
    ]


def settlement_rows(ledger: ContributionLedger) -> list[tuple]:
    return [(i, ledger.CE[i], ledger.CV[i]) for i in range(ledger.n_clients)]


def curve_rows(records: Sequence[RoundRecord]) -> list[tuple]:
    return [(r.t, r.train_acc, r.val_acc, r.test_acc) for r in records]


def export_run(out: Path, result: MarketResult, ledger: ContributionLedger) -> list[Path]:
    out = Path(out)
    return [
        write(out / "rounds.csv", "rounds", ROUNDS_COLUMNS, round_rows(result.records)),
        write(out / "clients.csv", "clients", CLIENTS_COLUMNS, client_rows(result, ledger)),
        write(out / "settlement.csv", "settlement", SETTLEMENT_COLUMNS, settlement_rows(ledger)),
    ]


def replay(rounds_path: Path, n_clients: int) -> tuple[list[int], list[float], list[float]]:
    """Rebuild P, GS and reward rates from a rounds ledger alone."""
    schema, rows = read(rounds_path)
    if schema != "rounds":
        raise MarketError("bad-csv", f"{rounds_path}: expected a rounds ledger, found {schema!r}")
    P = [0] * n_clients
    GS = [0.0] * n_clients
    R = [0] * n_clients
    for row in rows:
        c = int(row["client_id"])
        P[c] += 1
        GS[c] += float(row["theta"])
        R[c] += int(row["reward"])
    return P, GS, [R[i] / P[i] if P[i] else 0.0 for i in range(n_clients)]


def read_clients(path: Path) -> dict[str, list]:
    """Per-client settlement inputs (P, GS, C, EMD) from a clients ledger."""
    schema, rows = read(path)
    if schema != "clients":
        raise MarketError("bad-csv", f"{path}: expected a clients ledger, found {schema!r}")
    if not rows:
        raise MarketError("bad-csv", f"{path}: no client rows")
    try:
        rows.sort(key=lambda r: int(r["client_id"]))
        out = {
            "P": [int(r["P"]) for r in rows],
            "GS": [float(r["GS"]) for r in rows],
            "C": [float(r["C"]) for r in rows],
            "EMD": [float(r["EMD"]) for r in rows],
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise MarketError("bad-csv", f"{path}: malformed row ({exc})") from exc
    if not all(math.isfinite(v) for v in out["GS"] + out["C"] + out["EMD"]):
        raise MarketError("bad-csv", f"{path}: non-finite value")
    return out
