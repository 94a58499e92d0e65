"""Constructive fuzz generator for normalization tests.

Builds random source files from a restricted statement grammar while
independently tracking, by construction, the anonymous name every emitted
token must receive.  The generator maintains its own minimal scope model
(module / function / class-attribute), so it serves as an oracle that
shares no code with the analyzer under test.

generate(seed) -> (source_text, expected_terms, n_shadow_events)

expected_terms is the full normalized stream with structure markers:
NEWLINE -> "<NL>", INDENT -> "<IND>", DEDENT -> "<DED>", ENDMARKER -> "<END>".
"""

from __future__ import annotations

import random

NL, IND, DED, END = "<NL>", "<IND>", "<DED>", "<END>"

# fresh originals; disjoint from builtins used verbatim (range, len, print)
_FRESH = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
    "iota", "kappa", "mu", "nu", "omega", "sigma", "tau", "phi", "chi",
    "psi", "rho", "lam",
]
# names deliberately reused across scopes to force shadowing
_SHADOW = ["value", "count", "data", "item", "node"]
_ATTRS = ["size", "head", "cache", "label"]
_METHODS = ["update", "clear_all", "describe"]


class _Scope:
    def __init__(self, parent: "_Scope | None"):
        self.names: dict[str, str] = {}
        self.parent = parent
        # originals already referenced from an outer scope; assigning one of
        # these later would retroactively capture the earlier reference
        self.outer_used: set[str] = set()

    def lookup(self, name: str) -> str | None:
        s = self
        while s is not None:
            if name in s.names:
                return s.names[name]
            s = s.parent
        return None


class _Gen:
    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.counters = dict.fromkeys(("var", "function", "class", "arg", "attribute"), 0)
        self.rows: list[tuple[int, list[str], list[str]]] = []
        self.module = _Scope(None)
        self.functions: list[tuple[str, str]] = []  # (original, anon) callable so far
        self.shadow_events = 0
        pool = list(_FRESH)
        self.rng.shuffle(pool)
        self.pool = pool
        self.pool_i = 0

    # --- bookkeeping -----------------------------------------------------

    def fresh(self) -> str:
        if self.pool_i < len(self.pool):
            name = self.pool[self.pool_i]
        else:
            name = f"name{self.pool_i}"
        self.pool_i += 1
        return name

    def anon(self, group: str) -> str:
        self.counters[group] += 1
        return f"{group}{self.counters[group]}"

    def bind(self, scope: _Scope, name: str, group: str) -> str:
        if name in scope.names:
            return scope.names[name]  # rebinding keeps the first anon name
        if scope.lookup(name) is not None:
            self.shadow_events += 1
        a = self.anon(group)
        scope.names[name] = a
        return a

    def row(self, level: int, pairs: list[tuple[str, str]]) -> None:
        self.rows.append((level, [s for s, _ in pairs], [e for _, e in pairs]))

    # --- expressions -----------------------------------------------------

    def visible(self, scope: _Scope) -> list[tuple[str, str]]:
        seen: dict[str, str] = {}
        s = scope
        while s is not None:
            for k, v in s.names.items():
                seen.setdefault(k, v)
            s = s.parent
        return sorted(seen.items())

    def expr(self, scope: _Scope, depth: int = 0) -> list[tuple[str, str]]:
        choices = ["num", "num", "name", "name"]
        if self.functions:
            choices.append("call")
        if depth < 2:
            choices.extend(["binop", "binop"])
        kind = self.rng.choice(choices)
        names = self.visible(scope)
        if kind == "name" and not names:
            kind = "num"
        if kind == "num":
            return [(str(self.rng.randint(0, 99)), "$NUM$")]
        if kind == "name":
            orig, anon = self.rng.choice(names)
            if orig not in scope.names:
                scope.outer_used.add(orig)
            return [(orig, anon)]
        if kind == "call":
            orig, anon = self.rng.choice(self.functions)
            inner = self.expr(scope, depth + 1)
            out = [(orig, anon), ("(", "(")]
            if self.rng.random() < 0.2:
                out.append(("flag", "flag"))  # keyword label: stays verbatim
                out.append(("=", "="))
            out.extend(inner)
            out.append((")", ")"))
            return out
        op = self.rng.choice(["+", "*", "-"])
        return self.expr(scope, depth + 1) + [(op, op)] + self.expr(scope, depth + 1)

    # --- statements --------------------------------------------------------

    def assign(self, scope: _Scope, level: int) -> None:
        candidates = [n for n in _SHADOW if n not in scope.outer_used]
        if scope.names and self.rng.random() < 0.25:
            name = self.rng.choice(sorted(scope.names))
        elif candidates and self.rng.random() < 0.4:
            name = self.rng.choice(candidates)
        else:
            name = self.fresh()
        # bind first: an assignment makes the name local for the whole scope,
        # so a same-name reference in the RHS resolves to the new binding
        anon = self.bind(scope, name, "var")
        self.row(level, [(name, anon), ("=", "=")] + self.expr(scope))

    def augmented(self, scope: _Scope, level: int) -> None:
        if not scope.names:
            return self.assign(scope, level)
        name = self.rng.choice(sorted(scope.names))
        self.row(level, [(name, scope.names[name]), ("+=", "+=")] + self.expr(scope))

    def comprehension(self, scope: _Scope, level: int) -> None:
        # numbering follows stream order: the assignment target comes first.
        # Inside functions the loop target is always fresh: a reused name
        # would retroactively capture earlier occurrences in the scope.
        name = self.fresh()
        anon = self.bind(scope, name, "var")
        if scope is self.module:
            target = self.rng.choice(_SHADOW + [self.fresh()])
        else:
            target = self.fresh()
        t_anon = self.bind(scope, target, "var")
        self.row(
            level,
            [(name, anon), ("=", "="), ("[", "[")]
            + [(target, t_anon), ("+", "+"), (str(self.rng.randint(0, 9)), "$NUM$")]
            + [("for", "for"), (target, t_anon), ("in", "in"), ("range", "range")]
            + [("(", "("), (str(self.rng.randint(1, 9)), "$NUM$"), (")", ")"), ("]", "]")],
        )

    def call_stmt(self, scope: _Scope, level: int) -> None:
        if not self.functions:
            return self.assign(scope, level)
        orig, anon = self.rng.choice(self.functions)
        self.row(level, [(orig, anon), ("(", "(")] + self.expr(scope) + [(")", ")")])

    def if_block(self, scope: _Scope, level: int) -> None:
        names = self.visible(scope)
        if names:
            orig, anon = self.rng.choice(names)
            if orig not in scope.names:
                scope.outer_used.add(orig)
            head = [("if", "if"), (orig, anon), ("==", "=="),
                    (str(self.rng.randint(0, 9)), "$NUM$"), (":", ":")]
        else:
            head = [("if", "if"), ("True", "True"), (":", ":")]
        self.row(level, head)
        for _ in range(self.rng.randint(1, 2)):
            self.simple(scope, level + 1)

    def for_loop(self, scope: _Scope, level: int) -> None:
        target = self.rng.choice(_SHADOW + [self.fresh()])
        t_anon = self.bind(scope, target, "var")
        self.row(
            level,
            [("for", "for"), (target, t_anon), ("in", "in"), ("range", "range"),
             ("(", "("), (str(self.rng.randint(1, 9)), "$NUM$"), (")", ")"), (":", ":")],
        )
        for _ in range(self.rng.randint(1, 2)):
            self.simple(scope, level + 1)

    def simple(self, scope: _Scope, level: int) -> None:
        pick = self.rng.random()
        if pick < 0.5:
            self.assign(scope, level)
        elif pick < 0.7:
            self.augmented(scope, level)
        elif pick < 0.85:
            self.call_stmt(scope, level)
        else:
            self.comprehension(scope, level)

    def function_def(self, level: int) -> None:
        name = self.fresh()
        f_anon = self.bind(self.module, name, "function")
        fscope = _Scope(self.module)
        header = [("def", "def"), (name, f_anon), ("(", "(")]
        n_params = self.rng.randint(0, 3)
        has_default = False
        for k in range(n_params):
            pname = self.rng.choice(_SHADOW) if self.rng.random() < 0.5 else self.fresh()
            while pname in fscope.names:
                pname = self.fresh()
            p_anon = self.bind(fscope, pname, "arg")
            if k:
                header.append((",", ","))
            header.append((pname, p_anon))
            if has_default or self.rng.random() < 0.25:
                header.extend([("=", "="), (str(self.rng.randint(0, 9)), "$NUM$")])
                has_default = True
        header.extend([(")", ")"), (":", ":")])
        self.row(level, header)
        for _ in range(self.rng.randint(1, 3)):
            self.simple(fscope, level + 1)
        self.row(level + 1, [("return", "return")] + self.expr(fscope))
        self.functions.append((name, f_anon))

    def class_def(self, level: int) -> None:
        name = self.fresh()
        c_anon = self.bind(self.module, name, "class")
        self.row(level, [("class", "class"), (name, c_anon), (":", ":")])
        cscope = _Scope(self.module)  # class body sees module names
        attrs: dict[str, str] = {}
        if self.rng.random() < 0.4:
            vname = self.fresh()
            v_anon = self.bind(cscope, vname, "var")
            self.row(level + 1, [(vname, v_anon), ("=", "=")] + self.expr(self.module))
        method_names = self.rng.sample(_METHODS, self.rng.randint(1, 2))
        for mname in method_names:
            m_anon = self.bind(cscope, mname, "function")
            mscope = _Scope(self.module)  # methods skip the class scope
            header = [("def", "def"), (mname, m_anon), ("(", "("), ("self", "self")]
            if self.rng.random() < 0.6:
                pname = self.rng.choice(_SHADOW) if self.rng.random() < 0.5 else self.fresh()
                p_anon = self.bind(mscope, pname, "arg")
                header.extend([(",", ","), (pname, p_anon)])
            header.extend([(")", ")"), (":", ":")])
            self.row(level + 1, header)
            body_done = False
            if self.rng.random() < 0.8:
                attr = self.rng.choice(_ATTRS)
                if attr in attrs:
                    a_anon = attrs[attr]
                else:
                    a_anon = self.anon("attribute")
                    attrs[attr] = a_anon
                self.row(
                    level + 2,
                    [("self", "self"), (".", "."), (attr, a_anon), ("=", "=")]
                    + self.expr(mscope),
                )
                body_done = True
            if self.rng.random() < 0.5 or not body_done:
                self.simple(mscope, level + 2)
            if attrs and self.rng.random() < 0.6:
                attr, a_anon = self.rng.choice(sorted(attrs.items()))
                self.row(
                    level + 2,
                    [("return", "return"), ("self", "self"), (".", "."), (attr, a_anon)],
                )
            else:
                self.row(level + 2, [("return", "return")] + self.expr(mscope))

    def build(self) -> tuple[str, list[str]]:
        n = self.rng.randint(5, 11)
        for _ in range(n):
            pick = self.rng.random()
            if pick < 0.35:
                self.simple(self.module, 0)
            elif pick < 0.55:
                self.function_def(0)
            elif pick < 0.7:
                self.class_def(0)
            elif pick < 0.85:
                self.if_block(self.module, 0)
            else:
                self.for_loop(self.module, 0)
        src_lines: list[str] = []
        exp: list[str] = []
        prev = 0
        for level, src, ex in self.rows:
            while prev < level:
                exp.append(IND)
                prev += 1
            while prev > level:
                exp.append(DED)
                prev -= 1
            src_lines.append("    " * level + " ".join(src))
            exp.extend(ex)
            exp.append(NL)
        while prev > 0:
            exp.append(DED)
            prev -= 1
        exp.append(END)
        return "\n".join(src_lines) + "\n", exp


def generate(seed: int) -> tuple[str, list[str], int]:
    g = _Gen(seed)
    source, expected = g.build()
    return source, expected, g.shadow_events


def stream_terms(nfile) -> list[str]:
    """Normalized stream as marker terms, comparable with generate() output."""
    from sourcelm.pylex import TokenKind

    out = []
    for t in nfile.tokens:
        if t.kind is TokenKind.NEWLINE:
            out.append(NL)
        elif t.kind is TokenKind.INDENT:
            out.append(IND)
        elif t.kind is TokenKind.DEDENT:
            out.append(DED)
        elif t.kind is TokenKind.ENDMARKER:
            out.append(END)
        else:
            out.append(t.text)
    return out
