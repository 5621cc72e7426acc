"""Item bank, dataset ingestion, and outcome derivation.

The item bank is the universe of administered questions. Outcome items are
used only to define the binary risk class Y and are automatically excluded
from the splitting universe. Response codes are ordered integers; splits
everywhere in the package are "code <= cutpoint".
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CodeOutOfRange,
    DuplicateItemId,
    MissingValue,
    SchemaError,
    UnknownColumn,
)

MAX_LEVELS_DEFAULT = 6


@dataclass(frozen=True)
class ItemDef:
    """One question: short id, prompt text, ordered (code, label) levels."""

    id: str
    text: str
    levels: tuple  # of (int code, str label)
    scale: str | None = None

    def __post_init__(self):
        if not self.id:
            raise SchemaError("item id must be nonempty")
        if len(self.levels) < 2:
            raise SchemaError(f"item {self.id!r}: needs >= 2 response levels")
        codes = [c for c, _ in self.levels]
        if any(b <= a for a, b in zip(codes, codes[1:])):
            raise SchemaError(f"item {self.id!r}: level codes must be strictly increasing")

    @property
    def codes(self):
        return tuple(c for c, _ in self.levels)


@dataclass(frozen=True)
class ConditioningVar:
    name: str
    type: str = "int"


@dataclass(frozen=True)
class ItemBank:
    items: tuple  # of ItemDef, splitting universe + outcome-only items
    outcome_items: tuple = ()
    conditioning_vars: tuple = ()
    max_levels: int = MAX_LEVELS_DEFAULT

    def __post_init__(self):
        seen = set()
        for it in self.items:
            if it.id in seen:
                raise DuplicateItemId(f"duplicate item id {it.id!r}")
            seen.add(it.id)
            if len(it.levels) > self.max_levels:
                raise SchemaError(
                    f"item {it.id!r}: {len(it.levels)} levels exceeds maximum {self.max_levels}"
                )
        for oid in self.outcome_items:
            if oid not in seen:
                raise SchemaError(f"outcome item {oid!r} not declared in items")

    @property
    def item_ids(self):
        return tuple(it.id for it in self.items)

    @property
    def splitting_items(self):
        """Items usable as splitting variables (outcome items excluded)."""
        out = set(self.outcome_items)
        return tuple(it for it in self.items if it.id not in out)

    def item(self, item_id: str) -> ItemDef:
        for it in self.items:
            if it.id == item_id:
                return it
        raise KeyError(item_id)

    def to_dict(self):
        return {
            "items": [
                {
                    "id": it.id,
                    "text": it.text,
                    "levels": [{"code": c, "label": l} for c, l in it.levels],
                    "scale": it.scale,
                }
                for it in self.items
            ],
            "outcome_items": list(self.outcome_items),
            "conditioning_vars": [
                {"name": v.name, "type": v.type} for v in self.conditioning_vars
            ],
        }

    @classmethod
    def from_dict(cls, doc, max_levels=MAX_LEVELS_DEFAULT):
        try:
            items = tuple(
                ItemDef(
                    id=d["id"],
                    text=d.get("text", ""),
                    levels=tuple((int(lv["code"]), lv.get("label", "")) for lv in d["levels"]),
                    scale=d.get("scale"),
                )
                for d in doc["items"]
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed item-bank document: {exc}") from exc
        return cls(
            items=items,
            outcome_items=tuple(doc.get("outcome_items", ())),
            conditioning_vars=tuple(
                ConditioningVar(v["name"], v.get("type", "int"))
                for v in doc.get("conditioning_vars", ())
            ),
            max_levels=max_levels,
        )


def load_item_bank(path, max_levels=MAX_LEVELS_DEFAULT) -> ItemBank:
    with open(path) as fh:
        doc = json.load(fh)
    return ItemBank.from_dict(doc, max_levels=max_levels)


def save_item_bank(bank: ItemBank, path):
    with open(path, "w") as fh:
        json.dump(bank.to_dict(), fh, indent=1)


@dataclass
class Dataset:
    """Complete-case response matrix plus outcomes and conditioning values.

    ``responses`` holds raw declared codes; ``encoded`` holds the same data
    as 0-based level indices (what the numeric machinery consumes).
    """

    bank: ItemBank
    responses: np.ndarray  # (n, p) int16 raw codes, splitting items only
    outcomes: np.ndarray  # (n,) uint8 in {0, 1}
    conditioning: np.ndarray  # (n, q) int32
    row_ids: tuple = ()

    def __post_init__(self):
        if self.responses.ndim != 2:
            raise SchemaError("responses must be 2-D")
        if set(np.unique(self.outcomes)) - {0, 1}:
            raise SchemaError("outcomes must be binary")
        if not self.row_ids:
            self.row_ids = tuple(str(i) for i in range(self.n))

    @property
    def n(self):
        return self.responses.shape[0]

    @property
    def item_ids(self):
        return tuple(it.id for it in self.bank.splitting_items)

    @property
    def encoded(self) -> np.ndarray:
        """Responses as 0-based level indices, int8."""
        out = np.empty(self.responses.shape, dtype=np.int8)
        for j, it in enumerate(self.bank.splitting_items):
            codes = np.asarray(it.codes)
            out[:, j] = np.searchsorted(codes, self.responses[:, j])
        return out


def derive_outcome(violent_item_responses) -> int:
    """Risk class: 1 iff any outcome item is answered yes (code 1)."""
    v = np.asarray(violent_item_responses)
    if set(np.unique(v)) - {0, 1}:
        raise SchemaError("outcome item responses must be binary")
    return int(v.max()) if v.size else 0


def load_dataset(path, bank: ItemBank) -> Dataset:
    """Read a dataset CSV: item-id columns, outcome column Y, conditioning columns."""
    split_items = bank.splitting_items
    item_ids = [it.id for it in split_items]
    cond_names = [v.name for v in bank.conditioning_vars]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        known = set(item_ids) | set(cond_names) | {"Y", "row_id"}
        for col in header:
            if col not in known:
                raise UnknownColumn(f"unknown column {col!r}")
        for col in item_ids + ["Y"] + cond_names:
            if col not in header:
                raise UnknownColumn(f"required column {col!r} missing from header")
        colpos = {c: header.index(c) for c in header}
        levels = {it.id: set(it.codes) for it in split_items}

        resp_rows, y_rows, cond_rows, row_ids = [], [], [], []
        for rownum, rec in enumerate(reader):
            if len(rec) != len(header):
                raise SchemaError(f"row {rownum}: expected {len(header)} cells, got {len(rec)}")
            vals = []
            for iid in item_ids:
                cell = rec[colpos[iid]].strip()
                if cell == "":
                    raise MissingValue(rownum, iid)
                code = int(cell)
                if code not in levels[iid]:
                    raise CodeOutOfRange(rownum, iid, code)
                vals.append(code)
            ycell = rec[colpos["Y"]].strip()
            if ycell == "":
                raise MissingValue(rownum, "Y")
            y = int(ycell)
            if y not in (0, 1):
                raise CodeOutOfRange(rownum, "Y", y)
            cvals = []
            for cn in cond_names:
                cell = rec[colpos[cn]].strip()
                if cell == "":
                    raise MissingValue(rownum, cn)
                cvals.append(int(cell))
            resp_rows.append(vals)
            y_rows.append(y)
            cond_rows.append(cvals)
            row_ids.append(rec[colpos["row_id"]] if "row_id" in colpos else str(rownum))

    return Dataset(
        bank=bank,
        responses=np.asarray(resp_rows, dtype=np.int16).reshape(len(resp_rows), len(item_ids)),
        outcomes=np.asarray(y_rows, dtype=np.uint8),
        conditioning=np.asarray(cond_rows, dtype=np.int32).reshape(len(cond_rows), len(cond_names)),
        row_ids=tuple(row_ids),
    )


def save_dataset(ds: Dataset, path):
    cond_names = [v.name for v in ds.bank.conditioning_vars]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.item_ids) + ["Y"] + cond_names)
        for i in range(ds.n):
            writer.writerow(
                [int(v) for v in ds.responses[i]]
                + [int(ds.outcomes[i])]
                + [int(v) for v in ds.conditioning[i]]
            )
