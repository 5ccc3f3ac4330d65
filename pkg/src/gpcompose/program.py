"""Expression trees over component-wise vector operators.

A program maps the three question vectors (``ARG0``, ``ARG1``, ``ARG2``) to an
output vector. Trees are immutable and compare structurally, so they can be
used as dict keys and shared between threads.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

DEPTH_LIMIT = 10

TERMINALS = ("ARG0", "ARG1", "ARG2")
BINARY_OPS = ("add", "sub", "mul", "safeDiv")
UNARY_OPS = ("neg", "diff", "abs", "cos", "sin", "roll", "rint", "half", "norm", "log1p")
OPERATORS = BINARY_OPS + UNARY_OPS
ALL_KINDS = OPERATORS + TERMINALS

ARITY = {name: 2 for name in BINARY_OPS}
ARITY.update({name: 1 for name in UNARY_OPS})
ARITY.update({name: 0 for name in TERMINALS})

_CANONICAL = {name.lower(): name for name in ALL_KINDS}
# spelling used in the operator table of the original experiments
_CANONICAL["savediv"] = "safeDiv"


@dataclass(frozen=True)
class Node:
    op: str
    children: tuple["Node", ...] = ()

    def __post_init__(self):
        if self.op not in ARITY:
            raise ValueError(f"unknown node kind {self.op!r}")
        if len(self.children) != ARITY[self.op]:
            raise ValueError(
                f"{self.op} takes {ARITY[self.op]} children, got {len(self.children)}"
            )

    def __str__(self) -> str:
        return format_program(self)


def terminal(name: str) -> Node:
    return Node(name)


def depth(tree: Node) -> int:
    if not tree.children:
        return 0
    return 1 + max(depth(c) for c in tree.children)


def size(tree: Node) -> int:
    return 1 + sum(size(c) for c in tree.children)


def iter_nodes(tree: Node) -> Iterator[tuple[Node, int]]:
    """Pre-order walk yielding ``(subtree, depth_of_subtree_root)``."""
    stack = [(tree, 0)]
    while stack:
        node, d = stack.pop()
        yield node, d
        for child in reversed(node.children):
            stack.append((child, d + 1))


def subtree_at(tree: Node, index: int) -> tuple[Node, int]:
    """The subtree rooted at pre-order position ``index`` and its depth."""
    for i, (node, d) in enumerate(iter_nodes(tree)):
        if i == index:
            return node, d
    raise IndexError(f"node index {index} out of range for size {size(tree)}")


def replace_at(tree: Node, index: int, new: Node) -> Node:
    """Copy of ``tree`` with the subtree at pre-order ``index`` replaced."""
    if index == 0:
        return new
    offset = 1
    children = list(tree.children)
    for k, child in enumerate(children):
        n = size(child)
        if index < offset + n:
            children[k] = replace_at(child, index - offset, new)
            return Node(tree.op, tuple(children))
        offset += n
    raise IndexError(f"node index {index} out of range")


# ---------------------------------------------------------------------------
# evaluation

def _safe_div(w, v):
    out = np.zeros(np.broadcast(w, v).shape)
    np.divide(w, v, out=out, where=(v != 0))
    return out


def _norm(w):
    peak = np.max(np.abs(w), axis=-1, keepdims=True)
    out = np.zeros_like(w)
    np.divide(w, peak, out=out, where=(peak != 0))
    return out


_BINARY: dict[str, Callable] = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "safeDiv": _safe_div,
}

_UNARY: dict[str, Callable] = {
    "neg": np.negative,
    "diff": lambda w: 1.0 + w,
    "abs": np.abs,
    "cos": np.cos,
    "sin": np.sin,
    "roll": lambda w: np.roll(w, -1, axis=-1),
    "half": lambda w: 0.5 * w,
    "norm": _norm,
    "log1p": lambda w: np.log1p(_norm(w)),
}

RINT_MODES = {"even": np.rint, "trunc": np.trunc}


def evaluate(tree: Node, args: Sequence, rint_mode: str = "even") -> np.ndarray:
    """Run ``tree`` on three argument vectors.

    Arguments may be single vectors of shape ``(dim,)`` or stacks of shape
    ``(n, dim)``; operators act per row. Non-finite outputs are returned as-is.
    ``rint_mode`` selects round-half-to-even (``"even"``) or truncation
    toward zero (``"trunc"``) for the ``rint`` operator.
    """
    if len(args) != 3:
        raise ValueError(f"expected 3 arguments, got {len(args)}")
    arrays = [np.asarray(a, dtype=np.float64) for a in args]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError(
            "argument dimension mismatch: " + ", ".join(str(a.shape) for a in arrays)
        )
    if not shape or shape[-1] < 1:
        raise ValueError("arguments must have at least one component")
    rint = RINT_MODES[rint_mode]
    with np.errstate(all="ignore"):
        return _eval(tree, arrays, rint)


def _eval(node: Node, args, rint) -> np.ndarray:
    op = node.op
    if op in _BINARY:
        return _BINARY[op](_eval(node.children[0], args, rint), _eval(node.children[1], args, rint))
    if op == "rint":
        return rint(_eval(node.children[0], args, rint))
    if op in _UNARY:
        return _UNARY[op](_eval(node.children[0], args, rint))
    return args[int(op[3])]


def has_nonfinite(values: np.ndarray) -> bool:
    return not np.all(np.isfinite(values))


# ---------------------------------------------------------------------------
# text form

class ProgramSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


def format_program(tree: Node) -> str:
    if not tree.children:
        return tree.op
    return tree.op + "(" + ",".join(format_program(c) for c in tree.children) + ")"


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "(),":
            tokens.append((ch, ch, i))
            i += 1
        elif ch.isalnum() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
        else:
            raise ProgramSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(("end", "", n))
    return tokens


def parse_program(text: str) -> Node:
    """Parse ``name(arg, ...)`` notation; names are case-insensitive."""
    tokens = _tokenize(text)
    pos = 0

    def expr() -> Node:
        nonlocal pos
        kind, value, offset = tokens[pos]
        if kind != "ident":
            raise ProgramSyntaxError(
                f"expected an operator or terminal, found {value or 'end of input'!r}", offset
            )
        name = _CANONICAL.get(value.lower())
        if name is None:
            raise ProgramSyntaxError(f"unknown identifier {value!r}", offset)
        pos += 1
        arity = ARITY[name]
        if arity == 0:
            if tokens[pos][0] == "(":
                raise ProgramSyntaxError(f"terminal {name} takes no arguments", tokens[pos][2])
            return Node(name)
        if tokens[pos][0] != "(":
            raise ProgramSyntaxError(f"expected '(' after {name}", tokens[pos][2])
        pos += 1
        children = [expr()]
        while tokens[pos][0] == ",":
            if len(children) == arity:
                raise ProgramSyntaxError(
                    f"{name} takes {arity} argument(s), got more", tokens[pos][2]
                )
            pos += 1
            children.append(expr())
        kind, value, offset = tokens[pos]
        if kind != ")":
            raise ProgramSyntaxError(
                f"expected ')' or ',' in {name}, found {value or 'end of input'!r}", offset
            )
        if len(children) != arity:
            raise ProgramSyntaxError(
                f"{name} takes {arity} argument(s), got {len(children)}", offset
            )
        pos += 1
        return Node(name, tuple(children))

    tree = expr()
    kind, value, offset = tokens[pos]
    if kind != "end":
        raise ProgramSyntaxError(f"trailing input {value!r}", offset)
    return tree


def read_program_file(path: str | os.PathLike) -> list[tuple[int, Node | ProgramSyntaxError]]:
    """Parse a program file: one program per line, ``#`` comments and blanks skipped.

    Bad lines are returned as ``(lineno, error)`` so callers can keep going.
    """
    entries: list[tuple[int, Node | ProgramSyntaxError]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                entries.append((lineno, parse_program(text)))
            except ProgramSyntaxError as exc:
                entries.append((lineno, exc))
    return entries


def write_program_file(path: str | os.PathLike, trees: Sequence[Node], header: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        for tree in trees:
            fh.write(format_program(tree) + "\n")


def to_dot(tree: Node, name: str = "program") -> str:
    """Graphviz rendering: one node per line, then parent -> child edges."""
    lines = [f"digraph {name} {{"]
    edges = []
    counter = 0

    def visit(node: Node) -> int:
        nonlocal counter
        me = counter
        counter += 1
        lines.append(f'  n{me} [label="{node.op}"];')
        for child in node.children:
            edges.append(f"  n{me} -> n{visit(child)};")
        return me

    visit(tree)
    lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# random generation

def random_tree(rng: np.random.Generator, min_depth: int, max_depth: int, method: str) -> Node:
    """Random tree with target depth drawn uniformly from ``[min_depth, max_depth]``.

    ``full`` puts every leaf at the target depth. ``grow`` picks uniformly among
    all 17 node kinds above the target depth, so it may stop early.
    """
    if not 0 <= min_depth <= max_depth <= DEPTH_LIMIT:
        raise ValueError(f"invalid depth range [{min_depth}, {max_depth}]")
    if method not in ("full", "grow"):
        raise ValueError(f"unknown method {method!r}")
    target = int(rng.integers(min_depth, max_depth + 1))
    return _grow(rng, target, method == "full")


def _grow(rng: np.random.Generator, remaining: int, full: bool) -> Node:
    if remaining == 0:
        return Node(TERMINALS[rng.integers(len(TERMINALS))])
    pool = OPERATORS if full else ALL_KINDS
    op = pool[rng.integers(len(pool))]
    return Node(op, tuple(_grow(rng, remaining - 1, full) for _ in range(ARITY[op])))


def ramped_half_and_half(rng: np.random.Generator, n: int, min_depth: int = 1, max_depth: int = 4) -> list[Node]:
    """Initial population: even positions use ``full``, odd ones ``grow``."""
    return [
        random_tree(rng, min_depth, max_depth, "full" if i % 2 == 0 else "grow")
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# equivalence testing

_DIMS = (3, 8, 16)


def _nonfinite_class(x: np.ndarray) -> np.ndarray:
    # 0 finite, 1 nan, 2 +inf, 3 -inf
    return np.select([np.isnan(x), x == np.inf, x == -np.inf], [1, 2, 3], 0)


def semantically_equivalent(
    p1: Node,
    p2: Node,
    trials: int = 200,
    tol: float = 1e-9,
    rng: np.random.Generator | None = None,
) -> bool:
    """Randomized check that two programs compute the same function.

    Arguments are drawn uniformly from [-1, 1] with the dimension cycling
    through 3, 8 and 16. Non-finite outputs must agree in kind and position.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    for t in range(trials):
        dim = _DIMS[t % len(_DIMS)]
        args = rng.uniform(-1.0, 1.0, size=(3, dim))
        y1, y2 = evaluate(p1, args), evaluate(p2, args)
        c1, c2 = _nonfinite_class(y1), _nonfinite_class(y2)
        if not np.array_equal(c1, c2):
            return False
        finite = c1 == 0
        if finite.any() and np.max(np.abs(y1[finite] - y2[finite])) > tol:
            return False
    return True
