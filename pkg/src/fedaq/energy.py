"""Append-only ledger of communication energy (picojoules)."""

from __future__ import annotations

import csv
import io
import numbers
from dataclasses import dataclass
from typing import Iterable, Sequence

from .bitpack import MAX_BITS
from .errors import InvalidArgument, InvalidState

UPLINK = "uplink"
DOWNLINK = "downlink"
ALL_CLIENTS = "all"

LEDGER_COLUMNS = ("round", "link", "client", "d", "bits", "energy_pj")


@dataclass(frozen=True)
class LedgerEntry:
    round: int
    link: str
    client: int | str
    element_count: int
    bits_per_element: int
    energy: float


@dataclass(frozen=True)
class EnergyTotals:
    uplink: float
    downlink: float
    total: float


class EnergyLedger:
    def __init__(self, e1: float, e2: float):
        if not (e1 > 0 and e2 > 0):
            raise InvalidArgument("per-bit energies must be positive")
        self.e1 = float(e1)
        self.e2 = float(e2)
        self._entries: list[LedgerEntry] = []
        # running sums, accumulated in entry order like the scan in total()
        self._up = 0.0
        self._down = 0.0

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        return tuple(self._entries)

    def __len__(self):
        return len(self._entries)

    def record(self, round_idx: int, link: str, client, d: int, bits: int) -> LedgerEntry:
        if link not in (UPLINK, DOWNLINK):
            raise InvalidArgument(f"unknown link {link!r}")
        if not isinstance(bits, numbers.Integral) or not 1 <= bits <= MAX_BITS:
            raise InvalidArgument(f"bits must be in [1, {MAX_BITS}], got {bits!r}")
        if not isinstance(d, numbers.Integral) or d < 1:
            raise InvalidArgument(f"element count must be >= 1, got {d!r}")
        if self._entries and round_idx < self._entries[-1].round:
            raise InvalidState(
                f"round {round_idx} recorded after round {self._entries[-1].round}"
            )
        per_bit = self.e1 if link == UPLINK else self.e2
        bits, d = int(bits), int(d)
        entry = LedgerEntry(int(round_idx), link, client, d, bits, bits * d * per_bit)
        self._entries.append(entry)
        if link == UPLINK:
            self._up += entry.energy
        else:
            self._down += entry.energy
        return entry

    def total(self, up_to_round: int | None = None) -> EnergyTotals:
        if up_to_round is None:
            return EnergyTotals(self._up, self._down, self._up + self._down)
        up = down = 0.0
        for e in self._entries:
            if up_to_round is not None and e.round > up_to_round:
                break
            if e.link == UPLINK:
                up += e.energy
            else:
                down += e.energy
        return EnergyTotals(up, down, up + down)

    def round_totals(self, num_rounds: int | None = None) -> list[EnergyTotals]:
        """Per-round (non-cumulative) totals for rounds ``0 .. num_rounds-1``."""
        if num_rounds is None:
            num_rounds = self._entries[-1].round + 1 if self._entries else 0
        up = [0.0] * num_rounds
        down = [0.0] * num_rounds
        for e in self._entries:
            if e.round >= num_rounds:
                continue
            if e.link == UPLINK:
                up[e.round] += e.energy
            else:
                down[e.round] += e.energy
        return [EnergyTotals(u, dn, u + dn) for u, dn in zip(up, down)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for e in self._entries:
            w.writerow([e.round, e.link, e.client, e.element_count, e.bits_per_element, repr(e.energy)])
        return buf.getvalue()


def energy_to_reach(
    ledger: EnergyLedger,
    metric_series: Sequence[float],
    threshold: float,
    higher_is_better: bool = True,
) -> float | None:
    """Cumulative energy at the first round whose metric crosses ``threshold``.

    Use ``higher_is_better=False`` for loss-like metrics (crossing means ``<=``).
    """
    idx = first_crossing(metric_series, threshold, higher_is_better)
    if idx is None:
        return None
    return ledger.total(up_to_round=idx).total


def first_crossing(series: Iterable[float], threshold: float, higher_is_better: bool = True):
    for m, value in enumerate(series):
        if (value >= threshold) if higher_is_better else (value <= threshold):
            return m
    return None
