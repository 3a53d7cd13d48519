"""Expression graphs for dynamics f(x, w, theta).

A system is a DAG of ``Expr`` nodes; shared subexpressions are evaluated
once per call.  Two evaluation modes are supported on top of a compiled
instruction tape:

* point evaluation (exact floats, batched over rows of x), and
* natural inclusion evaluation (interval extension of every node, batched
  over rows of box endpoints).

Graphs are immutable after construction and evaluation is pure, so systems
can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import intervals as iv
from .errors import ConfigError, DimensionMismatch
from .intervals import Box


# ---------------------------------------------------------------------------
# nodes
# ---------------------------------------------------------------------------

class Expr:
    """Base expression node.  Arithmetic operators build new nodes."""

    __slots__ = ()

    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, as_expr(other))

    def __rsub__(self, other):
        return Sub(as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __neg__(self):
        return Neg(self)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return Const(float(value))
    raise TypeError(f"cannot convert {value!r} to an expression")


@dataclass(eq=False)
class Const(Expr):
    value: float


@dataclass(eq=False)
class StateVar(Expr):
    index: int


@dataclass(eq=False)
class DistVar(Expr):
    index: int


@dataclass(eq=False)
class ParamVar(Expr):
    index: int


@dataclass(eq=False)
class Add(Expr):
    a: Expr
    b: Expr


@dataclass(eq=False)
class Sub(Expr):
    a: Expr
    b: Expr


@dataclass(eq=False)
class Mul(Expr):
    a: Expr
    b: Expr


@dataclass(eq=False)
class Div(Expr):
    a: Expr
    b: Expr


@dataclass(eq=False)
class Neg(Expr):
    a: Expr


@dataclass(eq=False)
class Sin(Expr):
    a: Expr


@dataclass(eq=False)
class Cos(Expr):
    a: Expr


@dataclass(eq=False)
class Tanh(Expr):
    a: Expr


@dataclass(eq=False)
class Sqrt(Expr):
    a: Expr


@dataclass(eq=False)
class PowI(Expr):
    a: Expr
    power: int


def sin(e) -> Expr:
    return Sin(as_expr(e))


def cos(e) -> Expr:
    return Cos(as_expr(e))


def tanh(e) -> Expr:
    return Tanh(as_expr(e))


def sqrt(e) -> Expr:
    return Sqrt(as_expr(e))


def powi(e, k: int) -> Expr:
    return PowI(as_expr(e), int(k))


_BINARY = (Add, Sub, Mul, Div)
_UNARY = (Neg, Sin, Cos, Tanh, Sqrt, PowI)


def _children(node: Expr):
    if isinstance(node, _BINARY):
        return (node.a, node.b)
    if isinstance(node, _UNARY):
        return (node.a,)
    return ()


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DynamicsSystem:
    """n outputs over n state variables, p disturbances, q parameters."""

    n: int
    p: int
    q: int
    outputs: tuple

    _tape: "_Tape" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.outputs = tuple(self.outputs)
        if len(self.outputs) != self.n:
            raise DimensionMismatch(
                f"expected {self.n} outputs, got {len(self.outputs)}"
            )
        for root in self.outputs:
            for node in iter_nodes(root):
                if isinstance(node, StateVar) and not 0 <= node.index < self.n:
                    raise DimensionMismatch(
                        f"state variable index {node.index} out of range for n={self.n}"
                    )
                if isinstance(node, DistVar) and not 0 <= node.index < self.p:
                    raise DimensionMismatch(
                        f"disturbance index {node.index} out of range for p={self.p}"
                    )
                if isinstance(node, ParamVar) and not 0 <= node.index < self.q:
                    raise DimensionMismatch(
                        f"parameter index {node.index} out of range for q={self.q}"
                    )

    def tape(self) -> "_Tape":
        if self._tape is None:
            self._tape = _Tape(self.outputs)
        return self._tape


def iter_nodes(root: Expr):
    """All nodes reachable from root, each once (identity-deduped)."""
    seen = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        yield node
        stack.extend(_children(node))


# ---------------------------------------------------------------------------
# compiled tape
# ---------------------------------------------------------------------------

_OP_CONST, _OP_X, _OP_W, _OP_TH = 0, 1, 2, 3
_OP_ADD, _OP_SUB, _OP_MUL, _OP_DIV = 4, 5, 6, 7
_OP_NEG, _OP_SIN, _OP_COS, _OP_TANH, _OP_SQRT, _OP_POWI = 8, 9, 10, 11, 12, 13

_NODE_OPS = {
    Add: _OP_ADD,
    Sub: _OP_SUB,
    Mul: _OP_MUL,
    Div: _OP_DIV,
    Neg: _OP_NEG,
    Sin: _OP_SIN,
    Cos: _OP_COS,
    Tanh: _OP_TANH,
    Sqrt: _OP_SQRT,
    PowI: _OP_POWI,
}


class _Tape:
    """Topologically ordered instruction list over shared registers."""

    def __init__(self, roots):
        self.instrs = []
        reg = {}
        # iterative post-order so deep graphs do not hit the recursion limit
        for root in roots:
            stack = [(root, False)]
            while stack:
                node, expanded = stack.pop()
                if id(node) in reg:
                    continue
                if not expanded:
                    stack.append((node, True))
                    for child in _children(node):
                        if id(child) not in reg:
                            stack.append((child, False))
                    continue
                dst = len(self.instrs)
                if isinstance(node, Const):
                    self.instrs.append((_OP_CONST, node.value, -1, -1))
                elif isinstance(node, StateVar):
                    self.instrs.append((_OP_X, node.index, -1, -1))
                elif isinstance(node, DistVar):
                    self.instrs.append((_OP_W, node.index, -1, -1))
                elif isinstance(node, ParamVar):
                    self.instrs.append((_OP_TH, node.index, -1, -1))
                elif isinstance(node, _BINARY):
                    self.instrs.append(
                        (_NODE_OPS[type(node)], None, reg[id(node.a)], reg[id(node.b)])
                    )
                elif isinstance(node, PowI):
                    self.instrs.append((_OP_POWI, node.power, reg[id(node.a)], -1))
                else:
                    self.instrs.append(
                        (_NODE_OPS[type(node)], None, reg[id(node.a)], -1)
                    )
                reg[id(node)] = dst
        self.out_regs = [reg[id(root)] for root in roots]

    def eval_point(self, x, w, th):
        regs = [None] * len(self.instrs)
        for i, (op, payload, ia, ib) in enumerate(self.instrs):
            if op == _OP_CONST:
                regs[i] = payload
            elif op == _OP_X:
                regs[i] = x[:, payload]
            elif op == _OP_W:
                regs[i] = w[:, payload]
            elif op == _OP_TH:
                regs[i] = th[:, payload]
            elif op == _OP_ADD:
                regs[i] = regs[ia] + regs[ib]
            elif op == _OP_SUB:
                regs[i] = regs[ia] - regs[ib]
            elif op == _OP_MUL:
                regs[i] = regs[ia] * regs[ib]
            elif op == _OP_DIV:
                regs[i] = regs[ia] / regs[ib]
            elif op == _OP_NEG:
                regs[i] = -regs[ia]
            elif op == _OP_SIN:
                regs[i] = np.sin(regs[ia])
            elif op == _OP_COS:
                regs[i] = np.cos(regs[ia])
            elif op == _OP_TANH:
                regs[i] = np.tanh(regs[ia])
            elif op == _OP_SQRT:
                arg = np.asarray(regs[ia])
                if np.any(arg < 0.0):
                    raise iv.DomainError("sqrt of a negative value")
                regs[i] = np.sqrt(arg)
            else:  # _OP_POWI
                regs[i] = np.asarray(regs[ia], dtype=float) ** payload

        batch = x.shape[0]
        out = np.empty((batch, len(self.out_regs)))
        for j, r in enumerate(self.out_regs):
            out[:, j] = regs[r]
        return out

    def eval_interval(self, xlo, xhi, wlo, whi, tlo, thi):
        lo = [None] * len(self.instrs)
        hi = [None] * len(self.instrs)
        for i, (op, payload, ia, ib) in enumerate(self.instrs):
            if op == _OP_CONST:
                lo[i] = payload
                hi[i] = payload
            elif op == _OP_X:
                lo[i] = xlo[:, payload]
                hi[i] = xhi[:, payload]
            elif op == _OP_W:
                lo[i] = wlo[:, payload]
                hi[i] = whi[:, payload]
            elif op == _OP_TH:
                lo[i] = tlo[:, payload]
                hi[i] = thi[:, payload]
            elif op == _OP_ADD:
                lo[i], hi[i] = iv.vadd(lo[ia], hi[ia], lo[ib], hi[ib])
            elif op == _OP_SUB:
                lo[i], hi[i] = iv.vsub(lo[ia], hi[ia], lo[ib], hi[ib])
            elif op == _OP_MUL:
                lo[i], hi[i] = iv.vmul(lo[ia], hi[ia], lo[ib], hi[ib])
            elif op == _OP_DIV:
                lo[i], hi[i] = iv.vdiv(lo[ia], hi[ia], lo[ib], hi[ib])
            elif op == _OP_NEG:
                lo[i], hi[i] = iv.vneg(lo[ia], hi[ia])
            elif op == _OP_SIN:
                lo[i], hi[i] = iv.vsin(lo[ia], hi[ia])
            elif op == _OP_COS:
                lo[i], hi[i] = iv.vcos(lo[ia], hi[ia])
            elif op == _OP_TANH:
                lo[i], hi[i] = iv.vtanh(lo[ia], hi[ia])
            elif op == _OP_SQRT:
                lo[i], hi[i] = iv.vsqrt(np.asarray(lo[ia]), np.asarray(hi[ia]))
            else:  # _OP_POWI
                lo[i], hi[i] = iv.vpowi(
                    np.asarray(lo[ia], dtype=float),
                    np.asarray(hi[ia], dtype=float),
                    payload,
                )

        batch = xlo.shape[0]
        out_lo = np.empty((batch, len(self.out_regs)))
        out_hi = np.empty((batch, len(self.out_regs)))
        for j, r in enumerate(self.out_regs):
            out_lo[:, j] = lo[r]
            out_hi[:, j] = hi[r]
        return out_lo, out_hi


# ---------------------------------------------------------------------------
# public evaluation
# ---------------------------------------------------------------------------

def _as_batch(a, dim, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != dim:
        raise DimensionMismatch(f"{name} must have {dim} components, got shape {a.shape}")
    return a


def eval_point(sys: DynamicsSystem, x, w=None, theta=None) -> np.ndarray:
    """Exact evaluation of every output; x may be (n,) or batched (B, n)."""
    single = np.asarray(x).ndim == 1
    xb = _as_batch(x, sys.n, "x")
    wb = _as_batch(w if w is not None else np.zeros(sys.p), sys.p, "w")
    tb = _as_batch(theta if theta is not None else np.zeros(sys.q), sys.q, "theta")
    out = sys.tape().eval_point(xb, wb, tb)
    return out[0] if single else out


_EMPTY = Box(np.zeros(0), np.zeros(0))


def eval_natural_inclusion(
    sys: DynamicsSystem, x: Box, w: Box | None = None, theta: Box | None = None
) -> Box:
    """Natural inclusion function of the system over the given boxes."""
    w = w if w is not None else _EMPTY
    theta = theta if theta is not None else _EMPTY
    for box, dim, name in ((x, sys.n, "x"), (w, sys.p, "w"), (theta, sys.q, "theta")):
        if len(box) != dim:
            raise DimensionMismatch(f"{name} box has {len(box)} components, need {dim}")
    out_lo, out_hi = sys.tape().eval_interval(
        x.lo[None, :], x.hi[None, :], w.lo[None, :], w.hi[None, :],
        theta.lo[None, :], theta.hi[None, :],
    )
    return Box(out_lo[0], out_hi[0])


# ---------------------------------------------------------------------------
# lifting by substitution
# ---------------------------------------------------------------------------

def _substitute(roots, state_map):
    """Rebuild graphs with StateVar(i) replaced by state_map[i], sharing kept."""
    memo = {}

    def rebuild(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, StateVar):
            new = state_map[node.index]
        elif isinstance(node, _BINARY):
            a = rebuild(node.a)
            b = rebuild(node.b)
            new = node if (a is node.a and b is node.b) else type(node)(a, b)
        elif isinstance(node, PowI):
            a = rebuild(node.a)
            new = node if a is node.a else PowI(a, node.power)
        elif isinstance(node, _UNARY):
            a = rebuild(node.a)
            new = node if a is node.a else type(node)(a)
        else:
            new = node
        memo[key] = new
        return new

    # iterative pre-pass guards against recursion limits on deep graphs
    order = []
    seen = set()
    for root in roots:
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((c, False) for c in _children(node))
    for node in order:
        rebuild(node)
    return [memo[id(root)] for root in roots]


def _linear_combination(coeffs, terms) -> Expr:
    """Sum of coeff*term with exact-zero coefficients pruned."""
    parts = []
    for c, t in zip(coeffs, terms):
        if c == 0.0:
            continue
        if c == 1.0:
            parts.append(t)
        elif c == -1.0:
            parts.append(Neg(t))
        else:
            parts.append(Mul(Const(float(c)), t))
    if not parts:
        return Const(0.0)
    acc = parts[0]
    for part in parts[1:]:
        acc = Add(acc, part)
    return acc


def build_lifted(sys: DynamicsSystem, lift, invariant_aux=None) -> DynamicsSystem:
    """Lifted system with m outputs over m lifted state variables.

    The lifted dynamics are H f(H+ y, w) built by symbolic substitution
    x := H+ y followed by the row-wise combination H f; zero coefficients
    are pruned so they do not inflate interval dependency.  Output indices
    in ``invariant_aux`` are replaced by the constant 0 (the caller asserts
    invariance of those auxiliary coordinates; it is not checked here).
    """
    H = np.asarray(lift.H, dtype=float)
    Hp = np.asarray(lift.H_plus, dtype=float)
    if H.shape[1] != sys.n:
        raise DimensionMismatch(
            f"lifting has {H.shape[1]} base columns but system has n={sys.n}"
        )
    m = H.shape[0]
    yvars = [StateVar(i) for i in range(m)]
    xsub = [_linear_combination(Hp[i], yvars) for i in range(sys.n)]
    fsub = _substitute(sys.outputs, xsub)
    invariant_aux = frozenset(invariant_aux or ())
    outputs = []
    for i in range(m):
        if i in invariant_aux:
            outputs.append(Const(0.0))
        else:
            outputs.append(_linear_combination(H[i], fsub))
    return DynamicsSystem(n=m, p=sys.p, q=sys.q, outputs=tuple(outputs))


# ---------------------------------------------------------------------------
# prefix-notation parser (CLI custom dynamics)
# ---------------------------------------------------------------------------

_PREFIX_BINARY = {"add": Add, "sub": Sub, "mul": Mul, "div": Div}
_PREFIX_UNARY = {"neg": Neg, "sin": Sin, "cos": Cos, "tanh": Tanh, "sqrt": Sqrt}


def parse_expression(text: str, n: int, p: int, param_names=()) -> Expr:
    """Parse one prefix-notation expression, e.g. ``(mul 2 (sin x1))``.

    Atoms: numeric literals, state variables x1..xn, disturbances w1..wp,
    and declared parameter names.
    """
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    params = {name: i for i, name in enumerate(param_names)}
    pos = 0

    def fail(msg):
        raise ConfigError(f"dynamics expression {text!r}: {msg}")

    def atom(tok):
        try:
            return Const(float(tok))
        except ValueError:
            pass
        if tok in params:
            return ParamVar(params[tok])
        for prefix, cls, dim, what in (
            ("x", StateVar, n, "state"),
            ("w", DistVar, p, "disturbance"),
        ):
            if tok.startswith(prefix) and tok[len(prefix):].isdigit():
                idx = int(tok[len(prefix):])
                if not 1 <= idx <= dim:
                    fail(f"{what} variable {tok} out of range 1..{dim}")
                return cls(idx - 1)
        fail(f"unknown symbol {tok!r}")

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            fail("unexpected end of input")
        tok = tokens[pos]
        pos += 1
        if tok == ")":
            fail("unexpected ')'")
        if tok != "(":
            return atom(tok)
        if pos >= len(tokens):
            fail("missing operator after '('")
        op = tokens[pos]
        pos += 1
        if op in _PREFIX_BINARY:
            a = parse()
            b = parse()
            node = _PREFIX_BINARY[op](a, b)
        elif op in _PREFIX_UNARY:
            node = _PREFIX_UNARY[op](parse())
        elif op == "powi":
            if pos >= len(tokens):
                fail("powi needs an integer exponent")
            try:
                k = int(tokens[pos])
            except ValueError:
                fail(f"powi exponent must be an integer, got {tokens[pos]!r}")
            pos += 1
            node = PowI(parse(), k)
        else:
            fail(f"unknown operator {op!r}")
        if pos >= len(tokens) or tokens[pos] != ")":
            fail(f"missing ')' after operator {op!r}")
        pos += 1
        return node

    expr = parse()
    if pos != len(tokens):
        fail(f"trailing tokens starting at {tokens[pos]!r}")
    return expr


def parse_dynamics(lines, n: int, p: int, param_names=()) -> DynamicsSystem:
    """Parse a full system: one prefix expression per state derivative."""
    if len(lines) != n:
        raise ConfigError(f"expected {n} dynamics expressions, got {len(lines)}")
    outputs = tuple(parse_expression(line, n, p, param_names) for line in lines)
    return DynamicsSystem(n=n, p=p, q=len(tuple(param_names)), outputs=outputs)
