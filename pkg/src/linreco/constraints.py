"""Linear-constraint systems and their reduction to a structural-like form.

A set of homogeneous linear constraints ``gamma @ x = 0`` over ``n`` named
series is reduced to a partition of the variables into constrained and free
ones, together with the linear combination matrix ``A`` expressing the former
from the latter. Two reduction routes are provided (Gauss-Jordan elimination
and pivoted QR), plus a direct solve for caller-supplied partitions.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError

__all__ = [
    "ConstraintSystem",
    "VariablePartition",
    "ReconciliationPlan",
    "HierarchySpec",
    "parse_constraints",
    "read_constraints_file",
    "read_gamma_csv",
    "write_gamma_csv",
    "reduce_rref",
    "reduce_qr",
    "reduce_direct",
    "from_hierarchy",
    "compose_grouped",
]


@dataclass(frozen=True)
class ConstraintSystem:
    """Raw homogeneous constraints ``gamma @ x = 0`` with named columns."""

    gamma: np.ndarray
    var_names: tuple[str, ...]
    dropped_zero_rows: int = 0

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.ndim != 2:
            raise ValidationError("gamma must be a 2-d matrix")
        if not np.all(np.isfinite(gamma)):
            raise ValidationError("gamma contains non-finite entries")
        nonzero = np.any(gamma != 0.0, axis=1)
        dropped = int(np.sum(~nonzero))
        if dropped:
            warnings.warn(f"dropped {dropped} all-zero constraint row(s)")
            gamma = gamma[nonzero]
        if gamma.shape[0] < 1:
            raise ValidationError("empty constraint system (no nonzero rows)")
        if gamma.shape[1] < 2:
            raise ValidationError("a constraint system needs at least 2 variables")
        names = tuple(self.var_names)
        if len(names) != gamma.shape[1]:
            raise ValidationError(
                f"{len(names)} names for {gamma.shape[1]} columns"
            )
        if len(set(names)) != len(names):
            raise ValidationError("variable names must be unique")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "var_names", names)
        object.__setattr__(self, "dropped_zero_rows", dropped + self.dropped_zero_rows)

    @property
    def p(self) -> int:
        return self.gamma.shape[0]

    @property
    def n(self) -> int:
        return self.gamma.shape[1]


@dataclass(frozen=True)
class VariablePartition:
    """Split of column indices into constrained and free sets."""

    constrained_idx: tuple[int, ...]
    free_idx: tuple[int, ...]

    def __post_init__(self):
        c, u = set(self.constrained_idx), set(self.free_idx)
        n = len(self.constrained_idx) + len(self.free_idx)
        if c & u or c | u != set(range(n)):
            raise ValidationError("partition must split 0..n-1 into disjoint sets")

    @property
    def n_c(self) -> int:
        return len(self.constrained_idx)

    @property
    def n_u(self) -> int:
        return len(self.free_idx)

    @property
    def n(self) -> int:
        return self.n_c + self.n_u


@dataclass(frozen=True)
class ReconciliationPlan:
    """Derived coherent-subspace description.

    ``permutation`` lists original indices in plan order (constrained first,
    then free): a vector in plan order is ``x[permutation]``. ``lin_comb`` is
    the (n_c, n_u) matrix A with constrained = A @ free; ``structural`` is
    S = [A; I] and ``zero_constraints`` is C = [I, -A], both in plan order.
    """

    permutation: tuple[int, ...]
    lin_comb: np.ndarray
    partition: VariablePartition
    var_names: tuple[str, ...]
    structural: np.ndarray = field(init=False)
    zero_constraints: np.ndarray = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.lin_comb, dtype=float)
        n_c, n_u = self.partition.n_c, self.partition.n_u
        if a.shape != (n_c, n_u):
            raise ValidationError(f"lin_comb shape {a.shape} != ({n_c}, {n_u})")
        s = np.vstack([a, np.eye(n_u)])
        c = np.hstack([np.eye(n_c), -a])
        object.__setattr__(self, "lin_comb", a)
        object.__setattr__(self, "structural", s)
        object.__setattr__(self, "zero_constraints", c)

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def n_c(self) -> int:
        return self.partition.n_c

    @property
    def n_u(self) -> int:
        return self.partition.n_u

    @property
    def constrained_names(self) -> tuple[str, ...]:
        return tuple(self.var_names[i] for i in self.partition.constrained_idx)

    @property
    def free_names(self) -> tuple[str, ...]:
        return tuple(self.var_names[i] for i in self.partition.free_idx)

    def to_plan_order(self, x: np.ndarray) -> np.ndarray:
        """Reorder rows of an original-order vector/matrix into plan order."""
        return np.asarray(x)[list(self.permutation)]

    def from_plan_order(self, y: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_plan_order`."""
        inv = np.argsort(self.permutation)
        return np.asarray(y)[inv]

    def permute_cov(self, w: np.ndarray) -> np.ndarray:
        """Reorder both axes of an original-order covariance into plan order."""
        idx = list(self.permutation)
        return np.asarray(w)[np.ix_(idx, idx)]

    def coherence_residual(self, x: np.ndarray) -> float:
        """Max-abs constraint violation of an original-order vector/matrix."""
        return float(np.max(np.abs(self.zero_constraints @ self.to_plan_order(x))))

    def to_json(self) -> str:
        return json.dumps(
            {
                "constrained": list(self.constrained_names),
                "free": list(self.free_names),
                "A": self.lin_comb.tolist(),
            },
            indent=2,
        )


@dataclass(frozen=True)
class HierarchySpec:
    """Summation relations: parent = sum of coefficient * child."""

    relations: tuple[tuple[str, tuple[tuple[float, str], ...]], ...]

    @staticmethod
    def of(relations) -> "HierarchySpec":
        """Build from (parent, children) pairs; children are names or (coef, name)."""
        out = []
        for parent, children in relations:
            terms = tuple(
                (1.0, ch) if isinstance(ch, str) else (float(ch[0]), ch[1])
                for ch in children
            )
            out.append((parent, terms))
        if not out:
            raise ValidationError("hierarchy needs at least one relation")
        return HierarchySpec(tuple(out))


# ---------------------------------------------------------------------------
# Constraint DSL


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<op>[+\-*]))"
)


def _parse_side(text: str, lineno: int) -> dict[str, float]:
    """Parse one side of an equation into {var: coefficient}.

    Grammar: a sum of terms ``[+|-] [coef] [*] var`` or a bare ``0``.
    """
    coeffs: dict[str, float] = {}
    pos, sign, coef = 0, 1.0, None
    text = text.strip()

    def flush_constant():
        nonlocal coef
        # a dangling number with no variable is only legal if it is zero
        if coef is not None:
            if coef != 0.0:
                raise ValidationError(f"line {lineno}: bare nonzero constant {coef}")
            coef = None

    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValidationError(
                f"line {lineno}: unknown token near {text[pos:pos + 10]!r}"
            )
        pos = m.end()
        kind = m.lastgroup
        if kind == "num":
            if coef is not None:
                raise ValidationError(f"line {lineno}: two coefficients in a row")
            coef = float(m.group("num"))
        elif kind == "name":
            name = m.group("name")
            value = sign * (1.0 if coef is None else coef)
            coeffs[name] = coeffs.get(name, 0.0) + value
            sign, coef = 1.0, None
        elif m.group("op") == "*":
            if coef is None:
                raise ValidationError(f"line {lineno}: '*' without coefficient")
        elif m.group("op") == "+":
            flush_constant()
        else:  # "-"
            flush_constant()
            sign = -sign
    flush_constant()
    return coeffs


def parse_constraints(text: str) -> ConstraintSystem:
    """Parse the equation DSL into a :class:`ConstraintSystem`.

    Each line is either ``<linear combination> = 0`` or
    ``<var> = <linear combination>``; lines like ``A = B + C`` are folded to
    ``A - B - C = 0``. ``#`` starts a comment. An optional ``vars: a, b, c``
    header pins the column order; otherwise first appearance wins.
    """
    order: list[str] = []
    seen: set[str] = set()
    declared = False
    rows: list[dict[str, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower().startswith("vars:"):
            if declared or rows:
                raise ValidationError(
                    f"line {lineno}: vars header must come first and only once"
                )
            declared = True
            for name in line[5:].split(","):
                name = name.strip()
                if not name:
                    continue
                if name in seen:
                    raise ValidationError(
                        f"line {lineno}: duplicate variable declaration {name!r}"
                    )
                seen.add(name)
                order.append(name)
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: missing '='")
        lhs, _, rhs = line.partition("=")
        if "=" in rhs:
            raise ValidationError(f"line {lineno}: more than one '='")
        coeffs = _parse_side(lhs, lineno)
        for name, c in _parse_side(rhs, lineno).items():
            coeffs[name] = coeffs.get(name, 0.0) - c
        if not coeffs:
            raise ValidationError(f"line {lineno}: no variables")
        for name in coeffs:
            if name not in seen:
                if declared:
                    raise ValidationError(
                        f"line {lineno}: variable {name!r} not in vars header"
                    )
                seen.add(name)
                order.append(name)
        rows.append(coeffs)
    if not rows:
        raise ValidationError("empty system: no equations found")
    gamma = np.zeros((len(rows), len(order)))
    col = {name: j for j, name in enumerate(order)}
    for i, coeffs in enumerate(rows):
        for name, c in coeffs.items():
            gamma[i, col[name]] = c
    return ConstraintSystem(gamma, tuple(order))


def read_constraints_file(path) -> ConstraintSystem:
    with open(path, encoding="utf-8") as fh:
        return parse_constraints(fh.read())


def read_gamma_csv(path) -> ConstraintSystem:
    """Dense gamma CSV: header row of names, then coefficient rows."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) < 2:
        raise ValidationError("gamma CSV needs a header and at least one row")
    names = tuple(s.strip() for s in lines[0].split(","))
    gamma = np.array(
        [[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=float
    )
    return ConstraintSystem(gamma, names)


def write_gamma_csv(cs: ConstraintSystem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cs.var_names) + "\n")
        for row in cs.gamma:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Reductions


def _plan_from_partition(
    cs: ConstraintSystem, constrained: list[int], free: list[int], a: np.ndarray
) -> ReconciliationPlan:
    partition = VariablePartition(tuple(constrained), tuple(free))
    return ReconciliationPlan(
        permutation=tuple(constrained) + tuple(free),
        lin_comb=a,
        partition=partition,
        var_names=cs.var_names,
    )


def reduce_rref(cs: ConstraintSystem, tol: float | None = None) -> ReconciliationPlan:
    """Reduce via Gauss-Jordan elimination with partial pivoting.

    Pivot columns become the constrained variables (in pivot order); the
    remaining columns are free. Redundant constraints reduce to zero rows and
    are dropped. ``tol`` is a relative pivot threshold; the default is
    ``max(p, n) * eps * max|entry|``, re-evaluated at every elimination step.
    """
    z = cs.gamma.copy()
    p, n = z.shape
    eps = np.finfo(float).eps
    pivot_cols: list[int] = []
    row = 0
    for col in range(n):
        if row >= p:
            break
        if tol is None:
            thr = max(p, n) * eps * np.max(np.abs(z))
        else:
            thr = tol * np.max(np.abs(cs.gamma))
        sub = np.abs(z[row:, col])
        piv = int(np.argmax(sub)) + row
        if abs(z[piv, col]) <= thr:
            z[row:, col] = 0.0
            continue
        if abs(z[piv, col]) <= 16 * thr:
            warnings.warn(
                f"pivot {z[piv, col]:.3e} in column {col} is close to the "
                f"round-off threshold {thr:.3e}; rank decision may be fragile"
            )
        z[[row, piv]] = z[[piv, row]]
        z[row] /= z[row, col]
        others = np.arange(p) != row
        z[others] -= np.outer(z[others, col], z[row])
        pivot_cols.append(col)
        row += 1
    if not pivot_cols:
        raise NumericalError("all constraints vanished under the pivot tolerance")
    z = z[: len(pivot_cols)]
    free = [j for j in range(n) if j not in set(pivot_cols)]
    a = -z[:, free]
    return _plan_from_partition(cs, pivot_cols, free, a)


def reduce_qr(cs: ConstraintSystem, tol: float | None = None) -> ReconciliationPlan:
    """Reduce via QR decomposition with column pivoting.

    Columns are pivoted by greatest remaining norm (ties break to the lowest
    original index); the rank is the count of diagonal entries of R above
    ``tol * |R[0, 0]|``. A is obtained as a triangular solve of the free-column
    block against the pivot block.
    """
    gamma = cs.gamma
    p, n = gamma.shape
    if tol is None:
        tol = max(p, n) * np.finfo(float).eps
    _, r, perm = scipy.linalg.qr(gamma, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        raise NumericalError("all constraints vanished under the rank tolerance")
    rank = int(np.sum(diag > tol * diag[0]))
    if rank == 0:
        raise NumericalError("tolerance collapse: no reliable rank detected")
    a = -scipy.linalg.solve_triangular(r[:rank, :rank], r[:rank, rank:])
    constrained = [int(j) for j in perm[:rank]]
    free = [int(j) for j in perm[rank:]]
    return _plan_from_partition(cs, constrained, free, a)


def reduce_direct(
    cs: ConstraintSystem, partition: VariablePartition
) -> ReconciliationPlan:
    """Solve for A from a caller-supplied partition (requires p = n_c)."""
    if partition.n != cs.n:
        raise ValidationError("partition size does not match system")
    if cs.p != partition.n_c:
        raise ValidationError(
            f"reduce_direct needs p = n_c, got p={cs.p}, n_c={partition.n_c}"
        )
    gc = cs.gamma[:, list(partition.constrained_idx)]
    gu = cs.gamma[:, list(partition.free_idx)]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(gc)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - raised below anyway
        raise NumericalError(f"constrained block is singular: {exc}") from exc
    if np.min(np.abs(np.diag(lu))) <= cs.n * np.finfo(float).eps * np.max(np.abs(gc)):
        raise NumericalError(
            "constrained block is singular for this partition; "
            "use reduce_rref or reduce_qr to find a valid one"
        )
    a = -scipy.linalg.lu_solve((lu, piv), gu)
    return _plan_from_partition(
        cs, list(partition.constrained_idx), list(partition.free_idx), a
    )


def from_hierarchy(spec: HierarchySpec) -> ConstraintSystem:
    """Turn summation relations into a constraint system.

    One row per relation: +1 on the parent, -coefficient on each child.
    Column order is first appearance, so parents of a genuine hierarchy come
    before their children. Duplicate relations are kept (with a warning);
    redundancy is resolved by the reductions.
    """
    if not spec.relations:
        raise ValidationError("hierarchy needs at least one relation")
    order: list[str] = []
    seen: set[str] = set()
    keys = set()
    for parent, children in spec.relations:
        key = (parent, tuple(sorted(ch for _, ch in children)))
        if key in keys:
            warnings.warn(f"duplicate relation for parent {parent!r}")
        keys.add(key)
        for name in [parent] + [ch for _, ch in children]:
            if name not in seen:
                seen.add(name)
                order.append(name)
    gamma = np.zeros((len(spec.relations), len(order)))
    col = {name: j for j, name in enumerate(order)}
    for i, (parent, children) in enumerate(spec.relations):
        gamma[i, col[parent]] += 1.0
        for coef, ch in children:
            gamma[i, col[ch]] -= coef
    return ConstraintSystem(gamma, tuple(order))


def compose_grouped(
    blocks: list[ConstraintSystem],
    shared_vars: tuple[str, ...] | list[str] = (),
    null_vars: tuple[str, ...] | list[str] = (),
) -> ConstraintSystem:
    """Stack constraint blocks, merging columns only for declared shared names.

    ``null_vars`` are variables declared absent from the composite (their
    columns are removed before reduction); rows all survive.
    """
    if not blocks:
        raise ValidationError("no blocks to compose")
    shared = set(shared_vars)
    order: list[str] = []
    seen: set[str] = set()
    for bi, block in enumerate(blocks):
        for name in block.var_names:
            if name in seen:
                if name not in shared:
                    raise ValidationError(
                        f"variable {name!r} appears in block {bi} and an earlier "
                        "block but is not declared shared"
                    )
                continue
            seen.add(name)
            order.append(name)
    for name in null_vars:
        if name not in seen:
            raise ValidationError(f"null variable {name!r} not present in any block")
    keep = [name for name in order if name not in set(null_vars)]
    col = {name: j for j, name in enumerate(keep)}
    rows = sum(b.p for b in blocks)
    gamma = np.zeros((rows, len(keep)))
    i = 0
    for block in blocks:
        for r in range(block.p):
            for j, name in enumerate(block.var_names):
                if name in col:
                    gamma[i, col[name]] += block.gamma[r, j]
            i += 1
    return ConstraintSystem(gamma, tuple(keep))
