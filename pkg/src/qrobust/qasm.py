"""OpenQASM 2.0 frontend: parser, serializer, and text rendering.

Supported subset: the header, ``include`` (ignored), one ``qreg``, ``creg``,
``measure``, ``barrier`` (parsed and dropped), user ``gate`` macros without
control flow, and the builtin gates

    x y z h s sdg t tdg rx ry rz u1 u2 u3 cx cz ccx swap

Rotation arguments are constant expressions over ``+ - * /``, parentheses and
``pi``.  ``if``, ``reset`` and ``opaque`` are rejected by name.  Measurement
operators cannot be expressed in OpenQASM 2.0; they arrive through a JSON
config sidecar and are combined with the parsed circuit by ``build_model``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, Gate, Measurement, NoiseSite, QmlModel
from .errors import QasmError, UnsupportedConstruct, ValidationError

# ---------------------------------------------------------------------------
# builtin gate matrices
# ---------------------------------------------------------------------------


def _rx(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def _ry(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def _rz(t):
    return np.array([[np.exp(-0.5j * t), 0], [0, np.exp(0.5j * t)]])


def _u1(lam):
    return np.array([[1, 0], [0, np.exp(1j * lam)]])


def _u2(phi, lam):
    return np.array(
        [[1, -np.exp(1j * lam)], [np.exp(1j * phi), np.exp(1j * (phi + lam))]]
    ) / math.sqrt(2)


def _u3(theta, phi, lam):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [[c, -np.exp(1j * lam) * s], [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]]
    )


_CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128)
_CCX = np.eye(8, dtype=np.complex128)
_CCX[[6, 7]] = _CCX[[7, 6]]
_SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=np.complex128)

#: name -> (n_params, n_qubits, matrix factory)
BUILTIN_GATES = {
    "x": (0, 1, lambda: np.array([[0, 1], [1, 0]], dtype=np.complex128)),
    "y": (0, 1, lambda: np.array([[0, -1j], [1j, 0]])),
    "z": (0, 1, lambda: np.array([[1, 0], [0, -1]], dtype=np.complex128)),
    "h": (0, 1, lambda: np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2)),
    "s": (0, 1, lambda: np.array([[1, 0], [0, 1j]])),
    "sdg": (0, 1, lambda: np.array([[1, 0], [0, -1j]])),
    "t": (0, 1, lambda: np.array([[1, 0], [0, np.exp(0.25j * math.pi)]])),
    "tdg": (0, 1, lambda: np.array([[1, 0], [0, np.exp(-0.25j * math.pi)]])),
    "rx": (1, 1, _rx),
    "ry": (1, 1, _ry),
    "rz": (1, 1, _rz),
    "u1": (1, 1, _u1),
    "u2": (2, 1, _u2),
    "u3": (3, 1, _u3),
    "cx": (0, 2, lambda: _CX),
    "cz": (0, 2, lambda: np.diag([1, 1, 1, -1]).astype(np.complex128)),
    "ccx": (0, 3, lambda: _CCX),
    "swap": (0, 2, lambda: _SWAP),
}

_REJECTED = ("if", "reset", "opaque")


def builtin_gate(name: str, params: tuple[float, ...], qubits: tuple[int, ...]) -> Gate:
    n_params, n_qubits, factory = BUILTIN_GATES[name]
    if len(params) != n_params:
        raise ValidationError(f"gate {name} takes {n_params} parameter(s), got {len(params)}")
    if len(qubits) != n_qubits:
        raise ValidationError(f"gate {name} takes {n_qubits} qubit(s), got {len(qubits)}")
    return Gate(name, qubits, params, np.asarray(factory(*params), dtype=np.complex128))


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------

_PUNCT = ("->", ";", ",", "(", ")", "{", "}", "[", "]", "+", "-", "*", "/", "=")


@dataclass
class _Token:
    kind: str  # 'id' | 'num' | 'str' | 'punct' | 'eof'
    value: str
    line: int
    col: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    i, line, col = 0, 1, 1
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        if ch == '"':
            j = source.find('"', i + 1)
            if j < 0:
                raise QasmError("unterminated string", line, col)
            tokens.append(_Token("str", source[i + 1 : j], line, col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            seen_e = False
            seen_dot = False
            while j < n and (
                source[j].isdigit()
                or (source[j] == "." and not seen_dot and not seen_e)
                or (source[j] in "eE" and not seen_e)
                or (seen_e and source[j] in "+-" and source[j - 1] in "eE")
            ):
                if source[j] in "eE":
                    seen_e = True
                elif source[j] == ".":
                    seen_dot = True
                j += 1
            tokens.append(_Token("num", source[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(_Token("id", source[i:j], line, col))
            col += j - i
            i = j
            continue
        matched = None
        for p in _PUNCT:
            if source.startswith(p, i):
                matched = p
                break
        if matched is None:
            raise QasmError(f"unexpected character {ch!r}", line, col)
        tokens.append(_Token("punct", matched, line, col))
        i += len(matched)
        col += len(matched)
    tokens.append(_Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


@dataclass
class _MacroDef:
    name: str
    params: tuple[str, ...]
    qargs: tuple[str, ...]
    body: list  # list of (name, param_exprs, qarg_names, token)


@dataclass
class QasmProgram:
    """A parsed program: circuit plus register/measurement bookkeeping."""

    version: str
    qreg_name: str
    n_qubits: int
    creg_name: str | None
    creg_size: int
    circuit: Circuit
    measured_qubits: tuple[int, ...]


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.qreg: tuple[str, int] | None = None
        self.creg: tuple[str, int] | None = None
        self.macros: dict[str, _MacroDef] = {}
        self.instructions: list[Gate] = []
        self.measured: list[int] = []

    # token plumbing ---------------------------------------------------
    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, value: str | None = None) -> _Token:
        tok = self.next()
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value if value is not None else kind
            raise QasmError(f"expected {want!r}, found {tok.value!r}", tok.line, tok.col)
        return tok

    def err(self, msg: str, tok: _Token | None = None):
        tok = tok or self.peek()
        raise QasmError(msg, tok.line, tok.col)

    # grammar ------------------------------------------------------------
    def parse(self) -> QasmProgram:
        head = self.expect("id")
        if head.value != "OPENQASM":
            self.err("file must start with an OPENQASM 2.0 header", head)
        version = self.expect("num").value
        if version != "2.0":
            self.err(f"unsupported OpenQASM version {version}", head)
        self.expect("punct", ";")
        while self.peek().kind != "eof":
            self.statement()
        if self.qreg is None:
            raise QasmError("program declares no quantum register")
        circuit = Circuit(self.qreg[1], tuple(self.instructions))
        return QasmProgram(
            version="2.0",
            qreg_name=self.qreg[0],
            n_qubits=self.qreg[1],
            creg_name=self.creg[0] if self.creg else None,
            creg_size=self.creg[1] if self.creg else 0,
            circuit=circuit,
            measured_qubits=tuple(self.measured),
        )

    def statement(self):
        tok = self.peek()
        if tok.kind != "id":
            self.err(f"expected a statement, found {tok.value!r}")
        name = tok.value
        if name in _REJECTED:
            raise UnsupportedConstruct(
                f"'{name}' is not supported by this verifier", tok.line, tok.col
            )
        if name == "include":
            self.next()
            self.expect("str")
            self.expect("punct", ";")
            return
        if name == "qreg":
            self.next()
            reg = self.expect("id").value
            self.expect("punct", "[")
            size = self._int()
            self.expect("punct", "]")
            self.expect("punct", ";")
            if self.qreg is not None:
                self.err("only a single quantum register is supported", tok)
            if size < 1:
                self.err("quantum register must hold at least one qubit", tok)
            self.qreg = (reg, size)
            return
        if name == "creg":
            self.next()
            reg = self.expect("id").value
            self.expect("punct", "[")
            size = self._int()
            self.expect("punct", "]")
            self.expect("punct", ";")
            self.creg = (reg, size)
            return
        if name == "barrier":
            self.next()
            while self.peek().value != ";":
                self.next()
            self.expect("punct", ";")
            return
        if name == "measure":
            self.next()
            self._measure()
            return
        if name == "gate":
            self.next()
            self._macro_def()
            return
        self._gate_call()

    def _int(self) -> int:
        tok = self.expect("num")
        try:
            return int(tok.value)
        except ValueError:
            raise QasmError(f"expected an integer, found {tok.value!r}", tok.line, tok.col)

    def _qubit_operand(self) -> list[int]:
        """An indexed qubit ``q[i]`` or a bare register (broadcast)."""
        tok = self.expect("id")
        if self.qreg is None or tok.value != self.qreg[0]:
            self.err(f"unknown register {tok.value!r}", tok)
        if self.peek().value == "[":
            self.next()
            idx = self._int()
            self.expect("punct", "]")
            if idx < 0 or idx >= self.qreg[1]:
                raise QasmError(
                    f"qubit index {idx} out of range for {self.qreg[0]}[{self.qreg[1]}]",
                    tok.line,
                    tok.col,
                )
            return [idx]
        return list(range(self.qreg[1]))

    def _measure(self):
        targets = self._qubit_operand()
        self.expect("punct", "->")
        self.expect("id")
        if self.peek().value == "[":
            self.next()
            self._int()
            self.expect("punct", "]")
        self.expect("punct", ";")
        for q in targets:
            if q not in self.measured:
                self.measured.append(q)

    def _macro_def(self):
        name_tok = self.expect("id")
        name = name_tok.value
        if name in BUILTIN_GATES or name in self.macros:
            self.err(f"gate {name!r} is already defined", name_tok)
        params: list[str] = []
        if self.peek().value == "(":
            self.next()
            while self.peek().value != ")":
                params.append(self.expect("id").value)
                if self.peek().value == ",":
                    self.next()
            self.expect("punct", ")")
        qargs: list[str] = []
        while self.peek().value != "{":
            qargs.append(self.expect("id").value)
            if self.peek().value == ",":
                self.next()
        self.expect("punct", "{")
        body = []
        while self.peek().value != "}":
            tok = self.peek()
            if tok.kind != "id":
                self.err("expected a gate call inside gate body")
            if tok.value in _REJECTED:
                raise UnsupportedConstruct(
                    f"'{tok.value}' is not supported inside gate bodies", tok.line, tok.col
                )
            if tok.value == "barrier":
                self.next()
                while self.peek().value != ";":
                    self.next()
                self.expect("punct", ";")
                continue
            callee = self.next().value
            exprs = []
            if self.peek().value == "(":
                self.next()
                while self.peek().value != ")":
                    exprs.append(self._expr_tokens())
                    if self.peek().value == ",":
                        self.next()
                self.expect("punct", ")")
            names = []
            while self.peek().value != ";":
                names.append(self.expect("id").value)
                if self.peek().value == ",":
                    self.next()
            self.expect("punct", ";")
            body.append((callee, exprs, names, tok))
        self.expect("punct", "}")
        self.macros[name] = _MacroDef(name, tuple(params), tuple(qargs), body)

    def _expr_tokens(self) -> list[_Token]:
        """Collect the raw tokens of one expression argument (until , or ))."""
        depth = 0
        out = []
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                self.err("unterminated expression")
            if depth == 0 and tok.value in (",", ")"):
                return out
            if tok.value == "(":
                depth += 1
            elif tok.value == ")":
                depth -= 1
            out.append(self.next())

    def _gate_call(self):
        name_tok = self.expect("id")
        name = name_tok.value
        if name not in BUILTIN_GATES and name not in self.macros:
            self.err(f"unknown gate {name!r}", name_tok)
        exprs = []
        if self.peek().value == "(":
            self.next()
            while self.peek().value != ")":
                exprs.append(self._expr_tokens())
                if self.peek().value == ",":
                    self.next()
            self.expect("punct", ")")
        operands = []
        while self.peek().value != ";":
            operands.append(self._qubit_operand())
            if self.peek().value == ",":
                self.next()
        self.expect("punct", ";")
        params = tuple(_eval_expr(e, {}, self) for e in exprs)
        # broadcast: a bare register operand on a single-qubit gate fans out
        if len(operands) == 1 and len(operands[0]) > 1:
            arity = BUILTIN_GATES[name][1] if name in BUILTIN_GATES else len(self.macros[name].qargs)
            if arity == 1:
                for q in operands[0]:
                    self._emit(name, params, (q,), name_tok)
                return
            self.err(f"gate {name!r} needs indexed qubit operands", name_tok)
        qubits = []
        for op in operands:
            if len(op) != 1:
                self.err(f"gate {name!r} needs indexed qubit operands", name_tok)
            qubits.append(op[0])
        self._emit(name, params, tuple(qubits), name_tok)

    def _emit(self, name, params, qubits, tok, depth=0):
        if depth > 64:
            raise QasmError(f"gate macro recursion too deep at {name!r}", tok.line, tok.col)
        if name in BUILTIN_GATES:
            try:
                self.instructions.append(builtin_gate(name, params, qubits))
            except ValidationError as exc:
                raise QasmError(str(exc), tok.line, tok.col) from None
            return
        macro = self.macros[name]
        if len(params) != len(macro.params):
            raise QasmError(
                f"gate {name} takes {len(macro.params)} parameter(s), got {len(params)}",
                tok.line,
                tok.col,
            )
        if len(qubits) != len(macro.qargs):
            raise QasmError(
                f"gate {name} takes {len(macro.qargs)} qubit(s), got {len(qubits)}",
                tok.line,
                tok.col,
            )
        if len(set(qubits)) != len(qubits):
            raise QasmError(f"gate {name} repeats a qubit operand", tok.line, tok.col)
        env = dict(zip(macro.params, params))
        qmap = dict(zip(macro.qargs, qubits))
        for callee, exprs, names, body_tok in macro.body:
            values = tuple(_eval_expr(e, env, self) for e in exprs)
            try:
                mapped = tuple(qmap[n] for n in names)
            except KeyError as exc:
                raise QasmError(
                    f"unknown qubit argument {exc.args[0]!r} in gate {name}",
                    body_tok.line,
                    body_tok.col,
                )
            self._emit(callee, values, mapped, body_tok, depth + 1)


# expression evaluation (shunting-free recursive descent over a token list)


class _ExprCursor:
    def __init__(self, tokens: list[_Token], env: dict, parser: _Parser):
        self.tokens = tokens
        self.i = 0
        self.env = env
        self.parser = parser

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            self.parser.err("unexpected end of expression")
        self.i += 1
        return tok

    def parse(self) -> float:
        v = self.sum()
        if self.peek() is not None:
            tok = self.peek()
            raise QasmError(f"trailing tokens in expression: {tok.value!r}", tok.line, tok.col)
        return v

    def sum(self) -> float:
        v = self.product()
        while self.peek() is not None and self.peek().value in ("+", "-"):
            op = self.next().value
            rhs = self.product()
            v = v + rhs if op == "+" else v - rhs
        return v

    def product(self) -> float:
        v = self.unary()
        while self.peek() is not None and self.peek().value in ("*", "/"):
            op = self.next().value
            rhs = self.unary()
            if op == "/":
                if rhs == 0:
                    self.parser.err("division by zero in gate parameter")
                v = v / rhs
            else:
                v = v * rhs
        return v

    def unary(self) -> float:
        tok = self.peek()
        if tok is not None and tok.value == "-":
            self.next()
            return -self.unary()
        if tok is not None and tok.value == "+":
            self.next()
            return self.unary()
        return self.atom()

    def atom(self) -> float:
        tok = self.next()
        if tok.value == "(":
            v = self.sum()
            close = self.next()
            if close.value != ")":
                raise QasmError("expected ')'", close.line, close.col)
            return v
        if tok.kind == "num":
            try:
                return float(tok.value)
            except ValueError:
                raise QasmError(f"bad numeric literal {tok.value!r}", tok.line, tok.col)
        if tok.kind == "id":
            if tok.value == "pi":
                return math.pi
            if tok.value in self.env:
                return float(self.env[tok.value])
            raise QasmError(f"unknown name {tok.value!r} in expression", tok.line, tok.col)
        raise QasmError(f"unexpected token {tok.value!r} in expression", tok.line, tok.col)


def _eval_expr(tokens: list[_Token], env: dict, parser: _Parser) -> float:
    if not tokens:
        parser.err("empty gate parameter")
    value = _ExprCursor(tokens, env, parser).parse()
    if not math.isfinite(value):
        raise QasmError(
            f"gate parameter evaluates to {value!r}", tokens[0].line, tokens[0].col
        )
    return value


def parse_program(source: str) -> QasmProgram:
    """Parse a full program, keeping register and measurement bookkeeping."""
    return _Parser(source).parse()


def parse_qasm(source: str) -> Circuit:
    """Parse OpenQASM 2.0 source into a circuit (macros inlined)."""
    return parse_program(source).circuit


# ---------------------------------------------------------------------------
# serializer
# ---------------------------------------------------------------------------


def serialize_qasm(circuit: Circuit, measured_qubits: tuple[int, ...] = ()) -> str:
    """Emit OpenQASM 2.0 for a gate-only circuit (macros already inlined).

    Parameters are written with full repr precision so that parse ->
    serialize -> parse is the identity on instruction lists.
    """
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{circuit.n_qubits}];"]
    if measured_qubits:
        lines.append(f"creg c[{len(measured_qubits)}];")
    for ins in circuit.instructions:
        if isinstance(ins, NoiseSite):
            raise ValidationError(
                "noise sites cannot be expressed in OpenQASM 2.0; "
                "strip them and write a noise sidecar instead"
            )
        if ins.name not in BUILTIN_GATES:
            raise ValidationError(f"gate {ins.name!r} is not a serializable builtin")
        args = ", ".join(f"q[{q}]" for q in ins.qubits)
        if ins.params:
            params = ",".join(repr(p) for p in ins.params)
            lines.append(f"{ins.name}({params}) {args};")
        else:
            lines.append(f"{ins.name} {args};")
    for i, q in enumerate(measured_qubits):
        lines.append(f"measure q[{q}] -> c[{i}];")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# text rendering
# ---------------------------------------------------------------------------


def _format_p(p: float | None) -> str:
    return "" if p is None else f" {p:.4g}"


def _instruction_cells(ins, n_qubits: int) -> dict[int, str]:
    cells: dict[int, str] = {}
    if isinstance(ins, NoiseSite):
        label = f"[{ins.channel.tag}{_format_p(ins.channel.p)}]"
        for q in ins.qubits:
            cells[q] = label
        return cells
    name = ins.name
    if name in ("cx", "cz", "ccx"):
        controls = ins.qubits[:-1]
        target = ins.qubits[-1]
        for q in controls:
            cells[q] = "*"
        cells[target] = "[X]" if name in ("cx", "ccx") else "[Z]"
    elif name == "swap":
        cells[ins.qubits[0]] = "x"
        cells[ins.qubits[1]] = "x"
    else:
        if ins.params:
            text = f"[{name.upper()}({','.join(f'{p:.4g}' for p in ins.params)})]"
        else:
            text = f"[{name.upper()}]"
        for q in ins.qubits:
            cells[q] = text
    if len(ins.qubits) > 1:
        lo, hi = min(ins.qubits), max(ins.qubits)
        for q in range(lo + 1, hi):
            cells.setdefault(q, "|")
    return cells


def render_text(circuit: Circuit, measured_qubits: tuple[int, ...] = ()) -> str:
    """One row per qubit; instructions appear left to right in list order."""
    columns = [_instruction_cells(ins, circuit.n_qubits) for ins in circuit.instructions]
    if measured_qubits:
        columns.append({q: "[M]" for q in measured_qubits})
    widths = [max((len(c) for c in col.values()), default=1) + 2 for col in columns]
    rows = []
    label_w = len(f"q{circuit.n_qubits - 1}: ")
    for q in range(circuit.n_qubits):
        row = f"q{q}: ".ljust(label_w)
        for col, w in zip(columns, widths):
            cell = col.get(q, "")
            if cell == "|":
                row += "|".center(w, "-")
            elif cell:
                row += cell.center(w, "-")
            else:
                row += "-" * w
        rows.append(row + "-")
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# model assembly (circuit + measurement sidecar)
# ---------------------------------------------------------------------------


def measurement_from_config(config: dict, n_qubits: int,
                            qasm_measured: tuple[int, ...] = ()) -> Measurement:
    """Build the POVM from the model config sidecar.

    The sidecar owns the operators (given on the measured-qubit subspace as
    nested [re, im] pairs); measured qubits come from the sidecar when
    present, else from the program's measure statements, else all qubits.
    """
    try:
        meas = config["measurement"]
        labels = tuple(meas["labels"])
        raw_ops = meas["operators"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"model config is missing {exc!r}") from None
    measured = tuple(int(q) for q in config.get("measured_qubits", qasm_measured)) or tuple(
        range(n_qubits)
    )
    ops = []
    for m in raw_ops:
        try:
            ops.append(
                np.array([[complex(re, im) for re, im in row] for row in m], dtype=np.complex128)
            )
        except (TypeError, ValueError):
            raise ValidationError(
                "measurement operators must be nested [re, im] pair matrices"
            ) from None
    return Measurement(n_qubits, labels, tuple(ops), measured)


def build_model(program: QasmProgram, config: dict) -> QmlModel:
    meas = measurement_from_config(config, program.n_qubits, program.measured_qubits)
    return QmlModel(program.circuit, meas)
