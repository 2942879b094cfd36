"""Deterministic s-expression rendering, used for debugging and golden tests."""

from __future__ import annotations

from shapediff.symlang import expr as E


def _fmt(x):
    return repr(float(x))


def _terminal(node):
    if isinstance(node, E.Zero):
        return f"(Zero {list(node.shape)})" if node.shape else "0"
    if isinstance(node, E.Constant):
        if not node.shape:
            return _fmt(node.value)
        return "(Constant " + " ".join(_fmt(v) for v in node.value.ravel()) + ")"
    if isinstance(node, E.Coefficient):
        return f"(Coefficient {node.name})"
    if isinstance(node, E.Argument):
        return f"(Argument {node.number})"
    return f"({type(node).__name__})"


def sexpr(node):
    """Render ``node`` as nested parenthesised prefix notation."""
    cache = {}
    for n in E.unique_nodes(node):
        if isinstance(n, E.Terminal):
            cache[n] = _terminal(n)
            continue
        head = type(n).__name__
        if isinstance(n, E.Power):
            head += f" {n.exponent}"
        elif isinstance(n, E.Indexed):
            head += " " + ",".join(map(str, n.index))
        cache[n] = "(" + head + " " + " ".join(cache[op] for op in n.operands) + ")"
    return cache[node]
