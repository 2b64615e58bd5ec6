"""Access-trace recording and reuse-distance analysis.

A trace is a sequence of touches of logical data objects (a training
point, a block of model weights, a gradient, a point being predicted).
Reuse distance is measured in iterations of a per-class clock: every
recorded access advances its class clock by one, except accesses
recorded with ``advance=False``, which belong to the iteration already
in progress (for example the gradient that is produced and consumed in
the same loop body, or a training row that stays in registers while a
block of queries uses it).

With that convention the distance between two touches of an object is
the number of loop iterations that elapsed between them:

    A B A             -> A has distance 2
    SGD, fixed order  -> every training point has distance |T|
    model per update  -> distance 1

``reuse_histogram(trace, unit="intervening")`` gives the plain count of
same-class accesses in between instead (A B A -> 1).
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np


class ObjectClass(str, Enum):
    TRAINING_POINT = "training_point"
    MODEL = "model_weight_block"
    GRADIENT = "gradient"
    PREDICTION_POINT = "prediction_point"


_CLASS_CODES = {c: i for i, c in enumerate(ObjectClass)}
_CODE_CLASSES = list(ObjectClass)


@dataclass(frozen=True)
class AccessEvent:
    tick: int
    object_class: ObjectClass
    object_id: int
    advance: bool = True


class Trace:
    """Append-only access log.  A disabled trace ignores every record call."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._cls: list[int] = []
        self._ids: list[int] = []
        self._adv: list[bool] = []

    def record(self, object_class: ObjectClass, object_id: int, advance: bool = True) -> None:
        if not self.enabled:
            return
        self._cls.append(_CLASS_CODES[ObjectClass(object_class)])
        self._ids.append(int(object_id))
        self._adv.append(advance)

    def __len__(self):
        return len(self._cls)

    @property
    def events(self) -> list[AccessEvent]:
        return [AccessEvent(t, _CODE_CLASSES[c], i, a)
                for t, (c, i, a) in enumerate(zip(self._cls, self._ids, self._adv))]

    def iter_raw(self):
        """(tick, class, id, advance) tuples without building event objects."""
        for t, (c, i, a) in enumerate(zip(self._cls, self._ids, self._adv)):
            yield t, _CODE_CLASSES[c], i, a

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tick", "class", "id"])
            for t, c, i, _ in self.iter_raw():
                w.writerow([t, c.value, i])


def record(trace: Trace | None, object_class: ObjectClass, object_id: int, advance: bool = True) -> None:
    if trace is not None:
        trace.record(object_class, object_id, advance)


@dataclass
class ReuseHistogram:
    """Per-class map distance -> count; first touches go to ``cold``."""

    counts: dict[ObjectClass, Counter] = field(default_factory=dict)
    cold: Counter = field(default_factory=Counter)
    accesses: Counter = field(default_factory=Counter)

    def classes(self) -> list[ObjectClass]:
        return [c for c in ObjectClass if self.accesses[c]]

    def of(self, object_class: ObjectClass) -> Counter:
        return self.counts.get(ObjectClass(object_class), Counter())

    def reuse_count(self, object_class: ObjectClass) -> int:
        return sum(self.of(object_class).values())

    def distinct_objects(self, object_class: ObjectClass) -> int:
        return self.cold[ObjectClass(object_class)]

    def mean(self, object_class: ObjectClass) -> Fraction | None:
        hist = self.of(object_class)
        n = sum(hist.values())
        if n == 0:
            return None
        return Fraction(sum(d * c for d, c in hist.items()), n)

    def to_rows(self) -> list[tuple[str, str, int]]:
        rows = []
        for c in self.classes():
            rows.append((c.value, "inf", self.cold[c]))
            for d, n in sorted(self.of(c).items()):
                rows.append((c.value, str(d), n))
        return rows

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "distance", "count"])
            w.writerows(self.to_rows())


UNITS = ("iterations", "intervening")


def reuse_histogram(trace: Trace, unit: str = "iterations") -> ReuseHistogram:
    """Reuse distances per object class.

    ``iterations`` (default) counts elapsed iterations of the class clock,
    so A B A gives 2.  ``intervening`` counts same-class accesses strictly
    between the two touches, so A B A gives 1; it ignores ``advance``.
    """
    if unit not in UNITS:
        raise ValueError(f"unknown unit {unit!r}; expected one of {UNITS}")
    hist = ReuseHistogram()
    clocks: dict[ObjectClass, int] = {}
    last: dict[tuple[ObjectClass, int], int] = {}
    for _, c, obj, advance in trace.iter_raw():
        clock = clocks.get(c, -1)
        if advance or clock < 0 or unit == "intervening":
            clock += 1
            clocks[c] = clock
        hist.accesses[c] += 1
        key = (c, obj)
        prev = last.get(key)
        if prev is None:
            hist.cold[c] += 1
        else:
            gap = clock - prev if unit == "iterations" else clock - prev - 1
            hist.counts.setdefault(c, Counter())[gap] += 1
        last[key] = clock
    return hist


class _Fenwick:
    def __init__(self, n: int):
        self.tree = np.zeros(n + 1, dtype=np.int64)

    def add(self, i: int, v: int):
        i += 1
        while i < len(self.tree):
            self.tree[i] += v
            i += i & -i

    def prefix(self, i: int) -> int:
        """Sum of entries [0, i)."""
        s = 0
        while i > 0:
            s += self.tree[i]
            i -= i & -i
        return int(s)


def stack_distance_histogram(trace: Trace) -> ReuseHistogram:
    """LRU stack distance per class: distinct same-class objects touched
    strictly between two consecutive accesses to an object."""
    hist = ReuseHistogram()
    per_class: dict[ObjectClass, list[int]] = {}
    for _, c, obj, _ in trace.iter_raw():
        per_class.setdefault(c, []).append(obj)
    for c, seq in per_class.items():
        fw = _Fenwick(len(seq))
        last: dict[int, int] = {}
        counter = Counter()
        for pos, obj in enumerate(seq):
            hist.accesses[c] += 1
            prev = last.get(obj)
            if prev is None:
                hist.cold[c] += 1
            else:
                counter[fw.prefix(pos) - fw.prefix(prev + 1)] += 1
                fw.add(prev, -1)
            fw.add(pos, 1)
            last[obj] = pos
        hist.counts[c] = counter
    return hist


# --------------------------------------------------------------------------
# claim checks


@dataclass(frozen=True)
class Claim:
    name: str
    expected: str
    observed: str
    passed: bool


@dataclass
class ClaimReport:
    algorithm: str
    claims: list[Claim]

    @property
    def passed(self) -> bool:
        return bool(self.claims) and all(c.passed for c in self.claims)

    def lines(self) -> list[str]:
        return [f"{'PASS' if c.passed else 'FAIL'} {self.algorithm}: {c.name} "
                f"(expected {c.expected}, observed {c.observed})" for c in self.claims]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["algorithm", "claim", "expected", "observed", "passed"])
            for c in self.claims:
                w.writerow([self.algorithm, c.name, c.expected, c.observed, int(c.passed)])


def _all_equal(hist: ReuseHistogram, cls: ObjectClass, value: int, name: str) -> Claim:
    h = hist.of(cls)
    observed = sorted(h) if h else []
    ok = bool(h) and set(h) == {value}
    return Claim(name, f"all = {value}", f"distances {observed[:6]}{'...' if len(observed) > 6 else ''}", ok)


def _require(value, name):
    if value is None:
        raise ValueError(f"verify_claims needs {name}")
    return int(value)


ALGORITHMS = ("sgd", "knn", "knn-blocked", "minibatch-linear")


def verify_claims(algorithm: str, hist: ReuseHistogram, *, n_train: int | None = None,
                  n_weights: int | None = None, n_rt: int | None = None,
                  n_pred: int | None = None, block_size: int | None = None,
                  fixed_order: bool = True) -> ClaimReport:
    """Check a histogram against the reuse distances the algorithm's loop
    structure predicts.

    sgd               training points |T| (fixed order) or mean |T| (reshuffled),
                      model 1, gradient 0
    minibatch-linear  weight blocks |M|
    knn               reference points |RT|, query point 1
    knn-blocked       reference points |RT| across blocks, 0 inside a block,
                      mean (blocks-1)*|RT|/(|P|-1)
    """
    claims: list[Claim] = []
    if algorithm == "sgd":
        t = _require(n_train, "n_train")
        tp = ObjectClass.TRAINING_POINT
        if fixed_order:
            claims.append(_all_equal(hist, tp, t, "training point distance = |T|"))
        else:
            h = hist.of(tp)
            mean = hist.mean(tp)
            ok = mean == t and min(h, default=0) >= 1
            claims.append(Claim("training point mean distance = |T|, min >= 1",
                                f"mean {t}", f"mean {mean}, min {min(h, default=None)}", ok))
        claims.append(_all_equal(hist, ObjectClass.MODEL, 1, "model distance = 1 per update"))
        claims.append(_all_equal(hist, ObjectClass.GRADIENT, 0, "gradient distance = 0"))
    elif algorithm == "minibatch-linear":
        m = _require(n_weights, "n_weights")
        claims.append(_all_equal(hist, ObjectClass.MODEL, m, "weight block distance = |M|"))
    elif algorithm == "knn":
        rt = _require(n_rt, "n_rt")
        claims.append(_all_equal(hist, ObjectClass.TRAINING_POINT, rt, "reference point distance = |RT|"))
        if rt > 1:
            claims.append(_all_equal(hist, ObjectClass.PREDICTION_POINT, 1, "query point distance = 1"))
    elif algorithm == "knn-blocked":
        rt = _require(n_rt, "n_rt")
        p = _require(n_pred, "n_pred")
        b = _require(block_size, "block_size")
        blocks = math.ceil(p / b)
        h = hist.of(ObjectClass.TRAINING_POINT)
        nonzero = {d for d in h if d != 0}
        claims.append(Claim("reference point distance across blocks = |RT|", f"{{{rt}}}",
                            str(sorted(nonzero)), nonzero == ({rt} if blocks > 1 else set())))
        expected_zero = rt * (p - blocks)
        claims.append(Claim("in-block reuses have distance 0", str(expected_zero), str(h.get(0, 0)),
                            h.get(0, 0) == expected_zero))
        if p > 1:
            expected_mean = Fraction((blocks - 1) * rt, p - 1)
            mean = hist.mean(ObjectClass.TRAINING_POINT)
            claims.append(Claim("mean reference distance = (blocks-1)|RT|/(|P|-1)",
                                str(expected_mean), str(mean), mean == expected_mean))
        loads = hist.accesses[ObjectClass.TRAINING_POINT] - h.get(0, 0)
        claims.append(Claim("reference row loads = |RT| * blocks", str(rt * blocks), str(loads),
                            loads == rt * blocks))
    else:
        raise ValueError(f"unknown algorithm tag {algorithm!r}; expected one of {ALGORITHMS}")
    return ClaimReport(algorithm, claims)
