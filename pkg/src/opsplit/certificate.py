"""Exact linear-algebra certificates for fixed-point encodings.

A splitting's evaluation is written as a homogeneous linear system ``M v = 0``
over scalar blocks: every entry stands for that multiple of the ``d x d``
identity. The variables ``v`` are the inputs, resolvent inputs and outputs,
operator outputs, ``T`` outputs and the ``S`` output. Each resolvent
``x = J_{t A}(z)`` contributes the row ``-z + x + t*(A x) = 0``.

``M v = 0`` implies ``c^T v = 0`` exactly when ``c`` lies in the row space of
``M``. All arithmetic is done with :class:`fractions.Fraction`, so every
verdict is exact.
"""
import itertools
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .errors import MalformedSystem

OPERATORS = ("A", "B", "C")


def to_fraction(value):
    """Convert ints, Fractions and ``"p/q"`` strings to Fraction; floats are rejected."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not coefficients")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"exact coefficient expected (int, Fraction or 'p/q' string), got {value!r}")


def fraction_str(q):
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def rref(rows, ncols=None):
    """Reduced row echelon form over the rationals.

    Returns ``(R, pivots)`` where ``R`` holds only the nonzero rows and
    ``pivots`` lists their pivot columns.
    """
    R = [[to_fraction(v) for v in row] for row in rows]
    if ncols is None:
        ncols = len(R[0]) if R else 0
    pivots = []
    r = 0
    for col in range(ncols):
        sel = next((i for i in range(r, len(R)) if R[i][col] != 0), None)
        if sel is None:
            continue
        R[r], R[sel] = R[sel], R[r]
        piv = R[r][col]
        if piv != 1:
            R[r] = [v / piv for v in R[r]]
        pivot_row = R[r]
        for i in range(len(R)):
            if i != r:
                f = R[i][col]
                if f != 0:
                    R[i] = [a - f * b for a, b in zip(R[i], pivot_row)]
        pivots.append(col)
        r += 1
        if r == len(R):
            break
    return R[:r], pivots


def rank(rows, ncols=None):
    return len(rref(rows, ncols)[1])


def nullspace(rows, ncols):
    """Basis of ``{v : M v = 0}`` as a list of Fraction vectors."""
    R, pivots = rref(rows, ncols)
    free = [j for j in range(ncols) if j not in set(pivots)]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for row, p in zip(R, pivots):
            v[p] = -row[f]
        basis.append(v)
    return basis


class RowSpace:
    """Row space of ``M`` kept in reduced echelon form for repeated membership tests."""

    def __init__(self, M, ncols=None):
        if ncols is None:
            ncols = len(M[0]) if M else 0
        self.ncols = ncols
        self.R, self.pivots = rref(M, ncols)

    @property
    def rank(self):
        return len(self.pivots)

    def contains(self, c):
        """True iff ``c`` is a rational combination of the rows (``rank([M; c]) == rank(M)``)."""
        c = [to_fraction(v) for v in c]
        if len(c) != self.ncols:
            raise ValueError(f"column count mismatch: M has {self.ncols}, c has {len(c)}")
        for row, p in zip(self.R, self.pivots):
            f = c[p]
            if f != 0:
                c = [a - f * b for a, b in zip(c, row)]
        return not any(c)


def rowspace_implies(M, c):
    """True iff ``M v = 0`` forces ``c^T v = 0``, i.e. ``rank([M; c]) == rank(M)``."""
    ncols = len(c)
    if M and len(M[0]) != ncols:
        raise ValueError(f"column count mismatch: M has {len(M[0])}, c has {ncols}")
    return RowSpace(M, ncols).contains(c)


def implication_counterexample(M, c):
    """A nullspace vector ``v`` of ``M`` with ``c^T v != 0``, or None if the implication holds."""
    c = [to_fraction(v) for v in c]
    for v in nullspace(M, len(c)):
        if sum(a * b for a, b in zip(c, v)) != 0:
            return v
    return None


def matvec(M, v):
    return [sum(a * b for a, b in zip(row, v)) for row in M]


@dataclass(frozen=True)
class ResolventTag:
    output: str
    input: str
    operator: str
    step: Fraction
    op_output: str


@dataclass
class ScalarBlockSystem:
    """Scalar-block linear system with labelled columns and resolvent bookkeeping."""

    columns: list
    rows: list
    resolvents: list
    inputs: list
    outputs: list
    solution: Optional[str] = None

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise MalformedSystem("column labels must be unique")
        self.rows = [[to_fraction(v) for v in row] for row in self.rows]
        for row in self.rows:
            if len(row) != len(self.columns):
                raise MalformedSystem("row length does not match the number of columns")
        self.index = {name: j for j, name in enumerate(self.columns)}
        for name in itertools.chain(self.inputs, self.outputs,
                                    [self.solution] if self.solution else []):
            self._col(name)
        for tag in self.resolvents:
            if tag.operator not in OPERATORS:
                raise MalformedSystem(f"unknown operator tag {tag.operator!r}")
            if tag.step <= 0:
                raise MalformedSystem(f"resolvent step for {tag.output} must be positive")
            if not self._has_row(self.resolvent_row(tag)):
                raise MalformedSystem(f"no row encodes the resolvent producing {tag.output}")

    def _col(self, name):
        try:
            return self.index[name]
        except KeyError:
            raise MalformedSystem(f"unknown column {name!r}") from None

    @property
    def shape(self):
        return len(self.rows), len(self.columns)

    def unit(self, coeffs):
        """Dense row from a ``{label: coefficient}`` mapping."""
        row = [Fraction(0)] * len(self.columns)
        for name, value in coeffs.items():
            row[self._col(name)] += to_fraction(value)
        return row

    def resolvent_row(self, tag):
        return self.unit({tag.input: -1, tag.output: 1, tag.op_output: tag.step})

    def _has_row(self, target):
        for row in self.rows:
            j = next((i for i, v in enumerate(target) if v != 0), None)
            if j is None or row[j] == 0:
                continue
            scale = row[j] / target[j]
            if all(a == scale * b for a, b in zip(row, target)):
                return True
        return False

    def resolvents_of(self, operator):
        return [t for t in self.resolvents if t.operator == operator]

    def x_columns(self):
        return [t.output for t in self.resolvents]

    def implies(self, coeffs):
        return rowspace_implies(self.rows, self.unit(coeffs))

    def to_json(self):
        return {
            "columns": list(self.columns),
            "rows": [[fraction_str(v) for v in row] for row in self.rows],
            "resolvents": [{"output": t.output, "input": t.input, "operator": t.operator,
                            "step": fraction_str(t.step), "op_output": t.op_output}
                           for t in self.resolvents],
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "solution": self.solution,
        }

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        try:
            tags = [ResolventTag(r["output"], r["input"], r["operator"], to_fraction(r["step"]),
                                 r["op_output"]) for r in data["resolvents"]]
            return cls(list(data["columns"]), data["rows"], tags, list(data["inputs"]),
                       list(data["outputs"]), data.get("solution"))
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            if isinstance(exc, MalformedSystem):
                raise
            raise MalformedSystem(f"bad system description: {exc}") from exc


class SystemBuilder:
    """Record an evaluation procedure step by step and emit its scalar-block system.

    Columns are ordered inputs, then resolvent inputs/outputs in evaluation
    order, then ``T`` outputs, operator outputs and finally ``S``. Rows are
    ordered definitions (in evaluation order), fixed-point rows, resolvent
    rows and the ``S`` row.
    """

    def __init__(self, *inputs):
        self.inputs = list(inputs)
        self.body = []
        self.outputs = []
        self.op_outputs = []
        self.solution_name = None
        self.def_rows = []
        self.res_rows = []
        self.fp_rows = []
        self.sol_rows = []
        self.tags = []
        self.known = set(inputs)

    def _combo_row(self, name, combo):
        for ref in combo:
            if ref not in self.known:
                raise MalformedSystem(f"{name} refers to {ref!r} before it is defined")
        row = {name: Fraction(1)}
        for ref, coef in combo.items():
            row[ref] = row.get(ref, Fraction(0)) - to_fraction(coef)
        return row

    def define(self, name, combo):
        """Resolvent input ``name = sum(coef * ref)``."""
        self.def_rows.append(self._combo_row(name, combo))
        self.body.append(name)
        self.known.add(name)
        return self

    def resolvent(self, output, input_name, operator, step):
        if input_name not in self.known:
            raise MalformedSystem(f"resolvent input {input_name!r} is undefined")
        op_output = f"{operator}{output}"
        tag = ResolventTag(output, input_name, operator, to_fraction(step), op_output)
        self.tags.append(tag)
        self.res_rows.append({input_name: Fraction(-1), output: Fraction(1),
                              op_output: tag.step})
        self.body.append(output)
        self.op_outputs.append(op_output)
        self.known.add(output)
        return self

    def output(self, name, combo):
        self.def_rows.append(self._combo_row(name, combo))
        self.outputs.append(name)
        self.known.add(name)
        return self

    def solution(self, name, combo):
        self.sol_rows.append(self._combo_row(name, combo))
        self.solution_name = name
        return self

    def fixed_point(self):
        if len(self.outputs) != len(self.inputs):
            raise MalformedSystem("fixed-point rows need one T output per input block")
        for z, t in zip(self.inputs, self.outputs):
            self.fp_rows.append({t: Fraction(1), z: Fraction(-1)})
        return self

    def build(self):
        columns = self.inputs + self.body + self.outputs + self.op_outputs
        if self.solution_name:
            columns.append(self.solution_name)
        index = {name: j for j, name in enumerate(columns)}
        dense = []
        for sparse in self.def_rows + self.fp_rows + self.res_rows + self.sol_rows:
            row = [Fraction(0)] * len(columns)
            for name, v in sparse.items():
                row[index[name]] += v
            dense.append(row)
        return ScalarBlockSystem(columns, dense, list(self.tags), list(self.inputs),
                                 list(self.outputs), self.solution_name)


def family_thetas(alpha, beta, theta, eta=0):
    """Coefficients ``theta_1..theta_8`` of the two-operator family in scalar-block form."""
    alpha, beta, theta, eta = map(to_fraction, (alpha, beta, theta, eta))
    r = beta / alpha
    return [r, -1 - r, Fraction(-1), theta, -theta, Fraction(0), -1 + eta, -eta]


def build_family_system(alpha, beta, thetas):
    """7 x 9 system over ``(z0, z1, x1, z2, x2, Tz0, Ax1, Bx2, Sz0)`` with the fixed-point row.

    Rows: ``z1 = z0``; ``theta1 z0 + theta2 x1 + z2 = 0``;
    ``theta3 z0 + theta4 x1 + theta5 x2 + Tz0 = 0``; ``Tz0 = z0``; the two
    resolvent rows; ``theta6 z0 + theta7 x1 + theta8 x2 + Sz0 = 0``.
    """
    alpha, beta = to_fraction(alpha), to_fraction(beta)
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    t1, t2, t3, t4, t5, t6, t7, t8 = map(to_fraction, thetas)
    return (SystemBuilder("z0")
            .define("z1", {"z0": 1})
            .resolvent("x1", "z1", "A", alpha)
            .define("z2", {"z0": -t1, "x1": -t2})
            .resolvent("x2", "z2", "B", beta)
            .output("Tz0", {"z0": -t3, "x1": -t4, "x2": -t5})
            .solution("Sz0", {"z0": -t6, "x1": -t7, "x2": -t8})
            .fixed_point()
            .build())


def build_ryu3_system(alpha=1, theta=Fraction(1, 2)):
    """Scalar-block system of the 2-fold lifted three-operator splitting at a fixed point."""
    theta = to_fraction(theta)
    third = Fraction(1, 3)
    return (SystemBuilder("z0_1", "z0_2")
            .define("z1", {"z0_1": 1})
            .resolvent("x1", "z1", "A", alpha)
            .define("z2", {"x1": 1, "z0_2": 1})
            .resolvent("x2", "z2", "B", alpha)
            .define("z3", {"x1": 1, "z0_1": -1, "x2": 1, "z0_2": -1})
            .resolvent("x3", "z3", "C", alpha)
            .output("Tz0_1", {"z0_1": 1, "x3": theta, "x1": -theta})
            .output("Tz0_2", {"z0_2": 1, "x3": theta, "x2": -theta})
            .solution("Sz0", {"x1": third, "x2": third, "x3": third})
            .fixed_point()
            .build())


def build_ppxa_system(gamma=1, weights=(Fraction(1, 3),) * 3, theta=1):
    """Scalar-block system of PPXA (3-fold lifting) at a fixed point."""
    gamma, theta = to_fraction(gamma), to_fraction(theta)
    w = [to_fraction(x) for x in weights]
    if sum(w) != 1 or min(w) <= 0:
        raise ValueError("PPXA weights must be positive and sum to 1")
    b = SystemBuilder("z0_A", "z0_B", "z0_C")
    for i, op in enumerate(OPERATORS, start=1):
        b.define(f"z{i}", {f"z0_{op}": 1}).resolvent(f"x{i}", f"z{i}", op, gamma / w[i - 1])
    for i, op in enumerate(OPERATORS, start=1):
        combo = {f"z0_{op}": Fraction(1), f"x{i}": -theta}
        for j, other in enumerate(OPERATORS, start=1):
            combo[f"x{j}"] = combo.get(f"x{j}", Fraction(0)) + 2 * theta * w[j - 1]
            combo[f"z0_{other}"] = combo.get(f"z0_{other}", Fraction(0)) - theta * w[j - 1]
        b.output(f"Tz0_{op}", combo)
    return b.solution("Sz0", {"x1": 1}).fixed_point().build()


@dataclass
class EncodingReport:
    implies_consensus: dict
    implies_solution_map: Optional[bool]
    implies_zero_sum: Optional[bool]
    counterexamples: dict = field(default_factory=dict)

    @property
    def ok(self):
        flags = list(self.implies_consensus.values())
        flags += [f for f in (self.implies_solution_map, self.implies_zero_sum) if f is not None]
        return all(flags)

    @property
    def counterexample(self):
        return next(iter(self.counterexamples.values()), None)

    def to_json(self, sys=None):
        out = {
            "implies_consensus": {f"{a}={b}": v for (a, b), v in self.implies_consensus.items()},
            "implies_solution_map": self.implies_solution_map,
            "implies_zero_sum": self.implies_zero_sum,
            "ok": self.ok,
            "counterexamples": {},
        }
        for name, v in self.counterexamples.items():
            vec = [fraction_str(q) for q in v]
            out["counterexamples"][name] = dict(zip(sys.columns, vec)) if sys else vec
        return out


def default_targets(sys):
    """Consensus pairs between consecutive operators' first resolvent outputs, ``S = x``,
    and the sum of one operator output per operator."""
    firsts = [sys.resolvents_of(op)[0] for op in OPERATORS if sys.resolvents_of(op)]
    pairs = [(a.output, b.output) for a, b in zip(firsts, firsts[1:])]
    solution = firsts[0].output if sys.solution and firsts else None
    zero_sum = [t.op_output for t in firsts]
    return pairs, solution, zero_sum


def verify_encoding(sys, consensus_pairs=None, solution_target=None, zero_sum_target=None):
    """Check the three implications a fixed-point encoding must certify.

    ``consensus_pairs`` lists ``(x_i, x_j)`` labels, ``solution_target`` is the
    resolvent output that ``S`` must equal and ``zero_sum_target`` the
    operator-output labels that must sum to zero. Omitted targets take
    :func:`default_targets`.
    """
    pairs, sol, zs = default_targets(sys)
    pairs = pairs if consensus_pairs is None else list(consensus_pairs)
    sol = sol if solution_target is None else solution_target
    zs = zs if zero_sum_target is None else list(zero_sum_target)

    targets = {}
    for a, b in pairs:
        targets[(a, b)] = sys.unit({a: 1, b: -1})
    if sol is not None:
        targets["solution"] = sys.unit({sys.solution: 1, sol: -1})
    if zs:
        targets["zero_sum"] = sys.unit({name: 1 for name in zs})

    space = RowSpace(sys.rows, len(sys.columns))
    verdicts, witnesses = {}, {}
    for key, c in targets.items():
        verdicts[key] = space.contains(c)
        if not verdicts[key]:
            witnesses[key if isinstance(key, str) else f"{key[0]}={key[1]}"] = \
                implication_counterexample(sys.rows, c)
    return EncodingReport(
        implies_consensus={k: verdicts[k] for k in verdicts if isinstance(k, tuple)},
        implies_solution_map=verdicts.get("solution"),
        implies_zero_sum=verdicts.get("zero_sum"),
        counterexamples=witnesses,
    )


@dataclass
class ProbeReport:
    implies_ab: bool
    implies_bc: bool
    lifting: int
    n_resolvents: int
    x_only_rank: int
    within_rank: int
    needed_rank: int

    @property
    def both(self):
        return self.implies_ab and self.implies_bc

    def to_json(self):
        return {"implies_ab": self.implies_ab, "implies_bc": self.implies_bc, "both": self.both,
                "lifting": self.lifting, "n_resolvents": self.n_resolvents,
                "x_only_rank": self.x_only_rank, "within_operator_rank": self.within_rank,
                "needed_rank": self.needed_rank}


def impossibility_probe(sys, within_operator_consensus=True):
    """Test whether the fixed-point system forces all three operators onto one point.

    With ``within_operator_consensus`` the rows ``x_{a(1)} = x_{a(j)}`` (and
    likewise for B, C) are appended first. The report also carries the
    dimension of the part of the row space that involves only resolvent
    outputs: forcing ``x_1 = ... = x_n`` needs ``n - 1``.
    """
    groups = {op: sys.resolvents_of(op) for op in OPERATORS}
    missing = [op for op, tags in groups.items() if not tags]
    if missing:
        raise MalformedSystem(f"no resolvent recorded for operator(s) {', '.join(missing)}")
    extra = []
    if within_operator_consensus:
        for tags in groups.values():
            for t in tags[1:]:
                extra.append(sys.unit({tags[0].output: 1, t.output: -1}))
    L = sys.rows + extra
    space = RowSpace(L, len(sys.columns))
    xa, xb, xc = (groups[op][0].output for op in OPERATORS)
    ab = space.contains(sys.unit({xa: 1, xb: -1}))
    bc = space.contains(sys.unit({xb: 1, xc: -1}))
    x_idx = {sys.index[name] for name in sys.x_columns()}
    other = [[v for j, v in enumerate(row) if j not in x_idx] for row in L]
    ncols_other = len(sys.columns) - len(x_idx)
    x_only = space.rank - rank(other, ncols_other)
    n = len(sys.resolvents)
    return ProbeReport(ab, bc, len(sys.inputs), n, x_only,
                       rank(extra, len(sys.columns)) if extra else 0, n - 1)


def random_rational(rng, num=3, den=3):
    return Fraction(rng.randint(-num, num), rng.randint(1, den))


def random_candidate(rng, per_operator=(1, 1, 1), lifting=1, num=3, den=3):
    """Random resolvent-splitting evaluation procedure with the given number of
    resolvents per operator, in a random order, as a fixed-point system.

    ``rng`` is a :class:`random.Random`. Every resolvent input, ``T`` output
    and ``S`` output is a random rational combination of everything computed
    before it.
    """
    order = [op for op, k in zip(OPERATORS, per_operator) for _ in range(k)]
    rng.shuffle(order)
    inputs = ["z0"] if lifting == 1 else [f"z0_{i}" for i in range(1, lifting + 1)]
    b = SystemBuilder(*inputs)
    seen = list(inputs)
    for i, op in enumerate(order, start=1):
        b.define(f"z{i}", {ref: random_rational(rng, num, den) for ref in seen})
        b.resolvent(f"x{i}", f"z{i}", op, Fraction(rng.randint(1, 4), rng.randint(1, 4)))
        seen += [f"z{i}", f"x{i}"]
    for name in inputs:
        b.output(f"T{name}", {ref: random_rational(rng, num, den) for ref in seen})
    b.solution("Sz0", {ref: random_rational(rng, num, den) for ref in seen})
    return b.fixed_point().build()


def probe_random_candidates(trials, seed=0, per_operator=(1, 1, 1)):
    """Run the impossibility probe on ``trials`` random no-lifting candidates; count 'both'."""
    rng = random.Random(seed)
    both = 0
    for _ in range(trials):
        if impossibility_probe(random_candidate(rng, per_operator)).both:
            both += 1
    return both
