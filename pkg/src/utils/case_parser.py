"""
ケースファイル解析ロジック
MATPOWER形式（.m）の限定文法を解析し、NetworkCaseを生成・書き出す。

対応文法:
    - mpc.<名前> = <スカラー>;
    - mpc.<名前> = '<文字列>';
    - mpc.<名前> = [ 行; 行; ... ];   （行区切りは ; または改行、列区切りは空白またはカンマ）
    - mpc.<名前> = { ... };            （セル配列は読み飛ばす）
    - % 行コメント、function 行、end、... による行継続
"""

import math
import re
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from errors import CaseFormatError, PlacementError
from models.measurement import PmuPlacement
from models.network import (
    Branch,
    BranchStatus,
    Bus,
    BusKind,
    GenStatus,
    Generator,
    NetworkCase,
)

# 必須列数（MATPOWER case format version 2）
BUS_MIN_COLUMNS = 13
GEN_MIN_COLUMNS = 10
BRANCH_MIN_COLUMNS = 13

# 書き出し時の既定列（読み込み元の列がない場合）
_BUS_TEMPLATE = [0, 1, 0, 0, 0, 0, 1, 1.0, 0, 0, 1, 1.1, 0.9]
_GEN_TEMPLATE = [0, 0, 0, 0, 0, 1.0, 100, 1, 0, 0] + [0] * 11
_BRANCH_TEMPLATE = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, -360, 360]

_TOKEN_PATTERN = re.compile(
    r"""
    (?P<skip>[ \t\r]+|%[^\n]*|\.\.\.[^\n]*)
    |(?P<newline>\n)
    |(?P<number>[+-]?(?:(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|Inf\b))
    |(?P<string>'(?:[^'\n]|'')*')
    |(?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
    |(?P<punct>[=;,\[\]{}])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


@dataclass
class _Matrix:
    """解析済みの数値行列（行ごとの行番号付き）"""
    rows: List[List[float]]
    lines: List[int]
    line: int


def _tokenize(text: str) -> List[_Token]:
    """テキストをトークン列に分割する"""
    tokens: List[_Token] = []
    pos = 0
    line = 1
    line_start = 0

    while pos < len(text):
        match = _TOKEN_PATTERN.match(text, pos)
        if match is None:
            raise CaseFormatError(
                f"解釈できない文字です: {text[pos]!r}", line, pos - line_start + 1
            )
        kind = match.lastgroup
        value = match.group()
        if kind == "newline":
            tokens.append(_Token("newline", value, line, pos - line_start + 1))
            line += 1
            line_start = match.end()
        elif kind != "skip":
            tokens.append(_Token(kind, value, line, pos - line_start + 1))
        elif value.startswith("..."):
            # 行継続は改行も飲み込む
            end = match.end()
            if end < len(text) and text[end] == "\n":
                end += 1
                line += 1
                line_start = end
            pos = end
            continue
        pos = match.end()

    return tokens


class _Parser:
    """トークン列から mpc.<名前> への代入を集める"""

    def __init__(self, tokens: List[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.name = ""
        self.values: Dict[str, Tuple[Any, int]] = {}

    def _peek(self) -> Optional[_Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self) -> _Token:
        token = self._peek()
        if token is None:
            last = self.tokens[-1] if self.tokens else _Token("eof", "", 1, 1)
            raise CaseFormatError("予期しないファイル終端です", last.line, last.column)
        self.pos += 1
        return token

    def _expect(self, kind: str, text: Optional[str] = None) -> _Token:
        token = self._next()
        if token.kind != kind or (text is not None and token.text != text):
            expected = text if text is not None else kind
            raise CaseFormatError(
                f"'{expected}' が必要です（実際: {token.text!r}）", token.line, token.column
            )
        return token

    def parse(self) -> None:
        while self._peek() is not None:
            token = self._next()
            if token.kind == "newline" or (token.kind == "punct" and token.text in ";,"):
                continue
            if token.kind == "ident" and token.text == "function":
                self._parse_function()
            elif token.kind == "ident" and token.text == "end":
                continue
            elif token.kind == "ident" and token.text.startswith("mpc."):
                self._parse_assignment(token)
            else:
                raise CaseFormatError(f"構文エラー: {token.text!r}", token.line, token.column)

    def _parse_function(self) -> None:
        # function mpc = case14
        idents = []
        while self._peek() is not None and self._peek().kind != "newline":
            token = self._next()
            if token.kind == "ident":
                idents.append(token.text)
        if idents:
            self.name = idents[-1]

    def _parse_assignment(self, target: _Token) -> None:
        field_name = target.text[len("mpc."):]
        self._expect("punct", "=")
        token = self._next()

        if token.kind == "number":
            value: Any = _to_float(token)
        elif token.kind == "string":
            value = token.text[1:-1].replace("''", "'")
        elif token.kind == "punct" and token.text == "[":
            value = self._parse_matrix(token)
        elif token.kind == "punct" and token.text == "{":
            self._skip_cell(token)
            value = None
        else:
            raise CaseFormatError(f"代入値が不正です: {token.text!r}", token.line, token.column)

        # 文末は ; 改行 ファイル終端のいずれか
        end = self._peek()
        if end is not None:
            if end.kind == "punct" and end.text == ";":
                self.pos += 1
            elif end.kind != "newline":
                raise CaseFormatError(f"文末が不正です: {end.text!r}", end.line, end.column)

        if value is not None:
            self.values[field_name] = (value, target.line)

    def _parse_matrix(self, opening: _Token) -> _Matrix:
        rows: List[List[float]] = []
        lines: List[int] = []
        current: List[float] = []
        current_line = opening.line

        while True:
            token = self._next()
            if token.kind == "number":
                if not current:
                    current_line = token.line
                current.append(_to_float(token))
            elif token.kind == "punct" and token.text == ",":
                continue
            elif token.kind == "newline" or (token.kind == "punct" and token.text == ";"):
                if current:
                    rows.append(current)
                    lines.append(current_line)
                    current = []
            elif token.kind == "punct" and token.text == "]":
                if current:
                    rows.append(current)
                    lines.append(current_line)
                break
            else:
                raise CaseFormatError(
                    f"行列内に数値以外の要素があります: {token.text!r}", token.line, token.column
                )

        widths = {len(row) for row in rows}
        if len(widths) > 1:
            raise CaseFormatError("行列の列数が行ごとに異なります", opening.line, opening.column)
        return _Matrix(rows=rows, lines=lines, line=opening.line)

    def _skip_cell(self, opening: _Token) -> None:
        depth = 1
        while depth > 0:
            token = self._next()
            if token.kind == "punct" and token.text == "{":
                depth += 1
            elif token.kind == "punct" and token.text == "}":
                depth -= 1


def _to_float(token: _Token) -> float:
    try:
        return float(token.text)
    except ValueError:
        raise CaseFormatError(f"数値として解釈できません: {token.text!r}", token.line, token.column)


def _require_finite(values: List[float], count: int, line: Optional[int], label: str) -> None:
    """型付きの列がすべて有限値であることを確認"""
    for value in values[:count]:
        if not math.isfinite(value):
            raise CaseFormatError(f"{label}に有限でない値があります", line)


def _as_bus_id(value: float, line: Optional[int], label: str) -> int:
    if not float(value).is_integer() or value <= 0:
        raise CaseFormatError(f"{label}は正の整数である必要があります: {value}", line)
    return int(value)


def _build_case(
    base_mva: float,
    bus_rows: List[List[float]],
    gen_rows: List[List[float]],
    branch_rows: List[List[float]],
    name: str = "",
    version: str = "2",
    bus_lines: Optional[List[int]] = None,
    gen_lines: Optional[List[int]] = None,
    branch_lines: Optional[List[int]] = None,
) -> NetworkCase:
    """行データからNetworkCaseを組み立て、解析時の検証を行う"""
    def line_of(lines: Optional[List[int]], i: int) -> Optional[int]:
        return lines[i] if lines is not None else None

    if not math.isfinite(base_mva) or base_mva <= 0:
        raise CaseFormatError(f"baseMVA は正の値が必要です: {base_mva}")

    for label, rows, minimum in (
        ("mpc.bus", bus_rows, BUS_MIN_COLUMNS),
        ("mpc.gen", gen_rows, GEN_MIN_COLUMNS),
        ("mpc.branch", branch_rows, BRANCH_MIN_COLUMNS),
    ):
        if rows and len(rows[0]) < minimum:
            raise CaseFormatError(f"{label} の列数が不足しています（{len(rows[0])} < {minimum}）")

    buses: List[Bus] = []
    seen: set = set()
    for i, row in enumerate(bus_rows):
        line = line_of(bus_lines, i)
        _require_finite(row, 10, line, "母線データ")
        bus_id = _as_bus_id(row[0], line, "母線ID")
        if bus_id in seen:
            raise CaseFormatError(f"母線IDが重複しています: {bus_id}", line)
        seen.add(bus_id)
        try:
            kind = BusKind.from_code(row[1])
        except ValueError as e:
            raise CaseFormatError(str(e), line)
        if row[7] <= 0:
            raise CaseFormatError(f"母線{bus_id}の初期電圧が正ではありません: {row[7]}", line)
        buses.append(Bus(
            id=bus_id,
            kind=kind,
            p_demand=row[2],
            q_demand=row[3],
            g_shunt=row[4],
            b_shunt=row[5],
            v_mag_init=row[7],
            v_ang_init=row[8],
            base_kv=row[9],
            columns=tuple(row),
        ))

    slack_count = sum(1 for bus in buses if bus.kind == BusKind.SLACK)
    if slack_count != 1:
        raise CaseFormatError(f"スラック母線は1つである必要があります（{slack_count}個）")

    generators: List[Generator] = []
    for i, row in enumerate(gen_rows):
        line = line_of(gen_lines, i)
        _require_finite(row, 8, line, "発電機データ")
        bus_id = _as_bus_id(row[0], line, "発電機の接続母線")
        if bus_id not in seen:
            raise CaseFormatError(f"発電機の接続母線が存在しません: {bus_id}", line)
        generators.append(Generator(
            bus=bus_id,
            p_gen=row[1],
            q_gen=row[2],
            v_setpoint=row[5],
            status=GenStatus.from_code(row[7]),
            columns=tuple(row),
        ))

    branches: List[Branch] = []
    for i, row in enumerate(branch_rows):
        line = line_of(branch_lines, i)
        _require_finite(row, 11, line, "ブランチデータ")
        from_bus = _as_bus_id(row[0], line, "ブランチ端点")
        to_bus = _as_bus_id(row[1], line, "ブランチ端点")
        if from_bus not in seen or to_bus not in seen:
            raise CaseFormatError(f"ブランチの端点が存在しません: {from_bus}-{to_bus}", line)
        if from_bus == to_bus:
            raise CaseFormatError(f"ブランチの両端が同じ母線です: {from_bus}", line)
        status = BranchStatus.from_code(row[10])
        if status == BranchStatus.IN_SERVICE and row[2] == 0 and row[3] == 0:
            raise CaseFormatError(f"ブランチ {from_bus}-{to_bus} の直列インピーダンスが0です", line)
        branches.append(Branch(
            from_bus=from_bus,
            to_bus=to_bus,
            r=row[2],
            x=row[3],
            b_total=row[4],
            tap=row[8],
            shift=row[9],
            status=status,
            columns=tuple(row),
        ))

    return NetworkCase(
        base_mva=base_mva,
        buses=buses,
        generators=generators,
        branches=branches,
        name=name,
        version=version,
    )


def parse_case(text: Union[str, bytes]) -> NetworkCase:
    """
    MATPOWER形式のテキストを解析する。

    行の並びはファイル順を維持し、未知の項目とコメントは無視する。

    Args:
        text: ケースファイルの内容（bytesの場合はUTF-8として復号）

    Returns:
        NetworkCase

    Raises:
        CaseFormatError: 構文エラー、必須行列の欠落、ID重複、端点不正、スラック数不正
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise CaseFormatError(f"UTF-8として復号できません（{e.start}バイト目）")

    parser = _Parser(_tokenize(text))
    parser.parse()
    values = parser.values

    for required in ("baseMVA", "bus", "gen", "branch"):
        if required not in values:
            raise CaseFormatError(f"必須の行列がありません: mpc.{required}")

    base_mva, base_line = values["baseMVA"]
    if not isinstance(base_mva, float):
        raise CaseFormatError("mpc.baseMVA はスカラーである必要があります", base_line)

    matrices = {}
    for key in ("bus", "gen", "branch"):
        value, line = values[key]
        if not isinstance(value, _Matrix):
            raise CaseFormatError(f"mpc.{key} は行列である必要があります", line)
        matrices[key] = value

    version = "2"
    if "version" in values:
        version = str(values["version"][0])

    return _build_case(
        base_mva=base_mva,
        bus_rows=matrices["bus"].rows,
        gen_rows=matrices["gen"].rows,
        branch_rows=matrices["branch"].rows,
        name=parser.name,
        version=version,
        bus_lines=matrices["bus"].lines,
        gen_lines=matrices["gen"].lines,
        branch_lines=matrices["branch"].lines,
    )


def case_from_ppc(ppc: Mapping[str, Any], name: str = "") -> NetworkCase:
    """
    PYPOWER/MATPOWER形式の辞書（baseMVA, bus, gen, branch）からNetworkCaseを生成する。

    Args:
        ppc: 行列を numpy 配列で持つ辞書
        name: ケース名

    Returns:
        NetworkCase
    """
    for required in ("baseMVA", "bus", "gen", "branch"):
        if required not in ppc:
            raise CaseFormatError(f"必須の行列がありません: {required}")

    def rows(key: str) -> List[List[float]]:
        array = np.atleast_2d(np.asarray(ppc[key], dtype=float))
        return [] if array.size == 0 else array.tolist()

    return _build_case(
        base_mva=float(ppc["baseMVA"]),
        bus_rows=rows("bus"),
        gen_rows=rows("gen"),
        branch_rows=rows("branch"),
        name=name,
        version=str(ppc.get("version", "2")),
    )


def _fmt(value: float) -> str:
    """数値を再解析で完全に復元できる文字列にする"""
    if math.isinf(value):
        return "Inf" if value > 0 else "-Inf"
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def _overlay(template: List[float], original: Tuple[float, ...], updates: Dict[int, float]) -> List[float]:
    """元の列（なければテンプレート）に型付き項目を上書きする"""
    row = list(original) if original else list(template)
    for index, value in updates.items():
        row[index] = value
    return row


def _format_matrix(label: str, rows: List[List[float]]) -> List[str]:
    lines = [f"mpc.{label} = ["]
    for row in rows:
        lines.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
    lines.append("];")
    return lines


def write_case(case: NetworkCase) -> str:
    """
    NetworkCaseをMATPOWER形式のテキストに書き出す。

    連結性は検証しない（下流の処理で検証する）。
    parse_case(write_case(c)) は c と一致する。

    Args:
        case: 書き出すケース

    Returns:
        ケースファイルの内容
    """
    bus_rows = [
        _overlay(_BUS_TEMPLATE, bus.columns, {
            0: bus.id, 1: bus.kind.value, 2: bus.p_demand, 3: bus.q_demand,
            4: bus.g_shunt, 5: bus.b_shunt, 7: bus.v_mag_init, 8: bus.v_ang_init,
            9: bus.base_kv,
        })
        for bus in case.buses
    ]
    gen_rows = [
        _overlay(_GEN_TEMPLATE, gen.columns, {
            0: gen.bus, 1: gen.p_gen, 2: gen.q_gen, 5: gen.v_setpoint, 7: gen.status.value,
        })
        for gen in case.generators
    ]
    branch_rows = [
        _overlay(_BRANCH_TEMPLATE, branch.columns, {
            0: branch.from_bus, 1: branch.to_bus, 2: branch.r, 3: branch.x,
            4: branch.b_total, 8: branch.tap, 9: branch.shift, 10: branch.status.value,
        })
        for branch in case.branches
    ]

    lines: List[str] = []
    if case.name:
        lines.append(f"function mpc = {case.name}")
    lines.append(f"mpc.version = '{case.version}';")
    lines.append("")
    lines.append("%% system MVA base")
    lines.append(f"mpc.baseMVA = {_fmt(case.base_mva)};")
    lines.append("")
    lines.append("%% bus data")
    lines.append("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin")
    lines.extend(_format_matrix("bus", bus_rows))
    lines.append("")
    lines.append("%% generator data")
    lines.append("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin")
    lines.extend(_format_matrix("gen", gen_rows))
    lines.append("")
    lines.append("%% branch data")
    lines.append("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax")
    lines.extend(_format_matrix("branch", branch_rows))
    lines.append("")
    return "\n".join(lines)


def parse_placement(text: Union[str, bytes]) -> PmuPlacement:
    """
    PMU配置ファイルを解析する（1行に母線ID1つ、# 以降はコメント）。

    Raises:
        PlacementError: 整数でない行、重複した母線ID、空の配置
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")

    bus_ids: List[int] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        try:
            bus_id = int(content)
        except ValueError:
            raise PlacementError(f"{line_no}行目: 母線IDとして解釈できません: {content!r}")
        if bus_id in bus_ids:
            raise PlacementError(f"{line_no}行目: 母線IDが重複しています: {bus_id}")
        bus_ids.append(bus_id)

    if not bus_ids:
        raise PlacementError("PMU配置が空です")
    return PmuPlacement(tuple(bus_ids))


def write_placement(placement: PmuPlacement, header: str = "") -> str:
    """PMU配置をファイル形式の文字列にする"""
    lines = [f"# {header}"] if header else []
    lines.extend(str(bus_id) for bus_id in placement.bus_ids)
    return "\n".join(lines) + "\n"
