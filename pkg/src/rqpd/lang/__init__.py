from .ast import (
    ApplySuper,
    Channel,
    Gate,
    IfMeas,
    Init,
    Measurement,
    Program,
    Seq,
    Skip,
    Stmt,
    TraceOut,
    Unitary,
    WhileMeas,
    rename,
    seq,
    tag_copy,
    variables,
    walk,
)
from .builtins import CNOT, GATES, H, I2, X, Y, Z
from .check import WellFormednessError, output_registers
from .parser import ParseError, parse, parse_file, tokenize
from .pretty import pretty

__all__ = [
    "ApplySuper",
    "CNOT",
    "Channel",
    "GATES",
    "Gate",
    "H",
    "I2",
    "IfMeas",
    "Init",
    "Measurement",
    "ParseError",
    "Program",
    "Seq",
    "Skip",
    "Stmt",
    "TraceOut",
    "Unitary",
    "WellFormednessError",
    "WhileMeas",
    "X",
    "Y",
    "Z",
    "output_registers",
    "parse",
    "parse_file",
    "pretty",
    "rename",
    "seq",
    "tag_copy",
    "tokenize",
    "variables",
    "walk",
]
