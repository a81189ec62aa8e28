"""
Command-line surface: `python -m cli <command> [flags]`
"""

from .commands import COMMANDS, build_parser, main

__all__ = ['COMMANDS', 'build_parser', 'main']
