"""Structured Text front end: tokenizer, parser, AST and printer."""

from . import ast
from .lexer import Token, TokenKind, format_time, parse_time_ms, reconstruct, tokenize
from .parser import parse, parse_text, parse_unit
from .printer import format_body, format_pou, pretty_print

__all__ = [
    "ast", "Token", "TokenKind", "format_time", "parse_time_ms", "reconstruct", "tokenize",
    "parse", "parse_text", "parse_unit", "format_body", "format_pou", "pretty_print",
]
