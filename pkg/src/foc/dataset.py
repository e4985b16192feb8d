"""Dataset manifests and the stratified, exclusion-aware split."""
from __future__ import annotations

import csv
import json
import random
from collections import Counter, OrderedDict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from .errors import ConfigError, InfeasibleBalance, InsufficientPool, ParseError

DISEASE_LABELS = ("Pneumonia", "Atelectasis", "Pneumothorax", "Pleural Effusion", "No finding")
BINARY_LABELS = ("Normal", "Abnormal")
FIELDS = ("image_id", "path", "label", "split")


@dataclass(frozen=True)
class ManifestRow:
    image_id: str
    path: str
    label: str
    split: str = ""


def validate_manifest(rows: Sequence[ManifestRow]) -> List[ManifestRow]:
    rows = list(rows)
    seen = Counter(r.image_id for r in rows)
    dupes = sorted(k for k, n in seen.items() if n > 1)
    if dupes:
        raise ParseError(f"duplicate image_ids: {dupes[:5]}")
    labels = {r.label for r in rows}
    if labels and not (labels <= set(DISEASE_LABELS) or labels <= set(BINARY_LABELS)):
        raise ParseError(f"labels {sorted(labels)} are not drawn from one declared label set")
    return rows


def read_manifest(path) -> List[ManifestRow]:
    """Read a CSV (``image_id,path,label,split``) or JSON manifest."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        try:
            records = json.loads(text)
            rows = [ManifestRow(str(r["image_id"]), str(r.get("path", "")),
                                str(r.get("label", "")), str(r.get("split", "") or ""))
                    for r in records]
        except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
            raise ParseError(f"{path}: {exc}") from exc
        return validate_manifest(rows)
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or "image_id" not in reader.fieldnames:
        raise ParseError(f"{path}: missing header with an image_id column")
    rows = [ManifestRow(r["image_id"], r.get("path") or "", r.get("label") or "", r.get("split") or "")
            for r in reader]
    return validate_manifest(rows)


def write_manifest(target, rows: Iterable[ManifestRow]) -> None:
    """Write CSV to a path or an open text stream."""
    if hasattr(target, "write"):
        _write_rows(target, rows)
        return
    with open(target, "w", newline="", encoding="utf-8") as fh:
        _write_rows(fh, rows)


def _write_rows(fh, rows) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(FIELDS)
    for r in rows:
        writer.writerow([r.image_id, r.path, r.label, r.split])


def read_id_list(path) -> set:
    """Image ids from a manifest-style CSV or a one-id-per-line text file."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if lines and "image_id" in lines[0].split(","):
        return {r["image_id"] for r in csv.DictReader(lines)}
    return set(lines)


def _apportion(total: int, weights: Mapping[str, float]) -> Dict[str, int]:
    """Largest-remainder rounding of ``total`` across ``weights`` (sum 1)."""
    raw = {k: total * w for k, w in weights.items()}
    counts = {k: int(v) for k, v in raw.items()}
    leftover = total - sum(counts.values())
    for k in sorted(raw, key=lambda k: (-(raw[k] - counts[k]), list(weights).index(k)))[:leftover]:
        counts[k] += 1
    return counts


def split_dataset(rows: Sequence[ManifestRow], fractions: Optional[Mapping[str, float]] = None,
                  balance_tolerance: float = 0.1, exclusion: Iterable[str] = (),
                  seed: int = 0, sizes: Optional[Mapping[str, object]] = None) -> List[ManifestRow]:
    """Assign split tags by a seeded shuffle stratified per label.

    Either ``fractions`` (summing to 1, consuming the whole pool) or ``sizes``
    (absolute rows per split, drawn from the pool) names the splits. A
    ``sizes`` entry may also be a ``{label: count}`` mapping to fix that
    split's label counts exactly. Excluded
    ids never appear in the output. Each split's per-label share must stay
    within ``balance_tolerance`` of the pool's share.
    """
    if (fractions is None) == (sizes is None):
        raise ConfigError("give exactly one of fractions or sizes")
    excluded = set(exclusion)
    pool = sorted((r for r in validate_manifest(rows) if r.image_id not in excluded),
                  key=lambda r: r.image_id)
    if not pool:
        raise InsufficientPool("no rows left after exclusion")

    if fractions is not None:
        fractions = OrderedDict(fractions)
        if any(f < 0 for f in fractions.values()) or abs(sum(fractions.values()) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be non-negative and sum to 1: {dict(fractions)}")
        totals = None
    else:
        sizes = OrderedDict(sizes)
        fixed = {name: dict(n) for name, n in sizes.items() if isinstance(n, Mapping)}
        totals = {name: sum(fixed[name].values()) if name in fixed else n
                  for name, n in sizes.items()}
        if any(n < 0 for n in totals.values()) or any(v < 0 for q in fixed.values() for v in q.values()):
            raise ConfigError("split sizes must be non-negative")
        if sum(totals.values()) > len(pool):
            raise InsufficientPool(f"requested {sum(totals.values())} rows from a pool of {len(pool)}")

    by_label: Dict[str, List[ManifestRow]] = OrderedDict()
    for r in pool:
        by_label.setdefault(r.label, []).append(r)
    rng = random.Random(seed)
    for label in sorted(by_label):
        rng.shuffle(by_label[label])

    pool_share = {lab: len(rs) / len(pool) for lab, rs in by_label.items()}
    if totals is None:
        # fractions: every label is spread across the splits and fully consumed
        per_label = {lab: _apportion(len(rs), fractions) for lab, rs in by_label.items()}
        quotas = {name: {lab: per_label[lab][name] for lab in by_label} for name in fractions}
        totals = {name: sum(q.values()) for name, q in quotas.items()}
    else:
        # sizes: each split's total is exact, its labels follow the pool shares
        # unless the caller fixed per-label counts for that split
        remaining = {lab: len(rs) for lab, rs in by_label.items()}
        quotas = {}
        for name in fixed:
            unknown = sorted(set(fixed[name]) - set(by_label))
            if unknown:
                raise InsufficientPool(f"split {name!r}: no rows labelled {unknown}")
            quotas[name] = {lab: int(fixed[name].get(lab, 0)) for lab in by_label}
            for lab, n in quotas[name].items():
                remaining[lab] -= n
        short = sorted(lab for lab, n in remaining.items() if n < 0)
        if short:
            raise InsufficientPool(f"fixed label counts exceed the pool for {short}")
        for name, n in totals.items():
            if name in fixed:
                continue
            quota = _apportion(n, pool_share)
            short = 0
            for lab in quota:
                over = max(0, quota[lab] - remaining[lab])
                quota[lab] -= over
                short += over
            # rounding overdrew a label; take the rows from labels with spare ones
            for lab in sorted(remaining, key=lambda k: -(remaining[k] - quota[k])):
                extra = min(short, remaining[lab] - quota[lab])
                quota[lab] += extra
                short -= extra
            for lab in quota:
                remaining[lab] -= quota[lab]
            quotas[name] = quota
        quotas = OrderedDict((name, quotas[name]) for name in totals)
    for lab, members in by_label.items():
        need = sum(q[lab] for q in quotas.values())
        if need > len(members):
            raise InsufficientPool(f"label {lab!r}: need {need} rows, pool has {len(members)}")

    out: List[ManifestRow] = []
    cursor = {lab: 0 for lab in by_label}
    for name, quota in quotas.items():
        for lab in sorted(by_label):
            take = by_label[lab][cursor[lab]:cursor[lab] + quota[lab]]
            cursor[lab] += quota[lab]
            out.extend(replace(r, split=name) for r in take)

    for name, n in totals.items():
        if n == 0:
            continue
        for lab, share in pool_share.items():
            got = quotas[name][lab] / n
            if abs(got - share) > balance_tolerance:
                raise InfeasibleBalance(
                    f"split {name!r}: label {lab!r} share {got:.3f} vs pool {share:.3f}")
    return sorted(out, key=lambda r: r.image_id)


def parse_fractions(text: str, names: Optional[Sequence[str]] = None) -> Dict[str, float]:
    values = [float(v) for v in text.split(",") if v.strip()]
    if names is None:
        names = ("train", "test", "val")[:len(values)] if len(values) <= 3 else \
            [f"split{i}" for i in range(len(values))]
    if len(names) != len(values):
        raise ConfigError("number of split names and fractions differ")
    return OrderedDict(zip(names, values))
