"""
Console output for the command line: header, config and metric tables, error panels.

Library code logs through structlog; only the CLI prints, and it prints here.
"""

import math

import pandas as pd
from rich.box import HEAVY, ROUNDED
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

console = Console(stderr=True)

COLORS = {
    "primary": "#3b82f6",
    "success": "#10b981",
    "warning": "#f59e0b",
    "error": "#ef4444",
    "cyan": "#06b6d4",
    "muted": "#64748b",
}


def print_header(command: str) -> None:
    title = Text()
    title.append("discolcfrs ", style=f"bold {COLORS['primary']}")
    title.append(command, style=f"bold {COLORS['cyan']}")
    console.print(Panel(title, border_style=COLORS["primary"], box=HEAVY, padding=(0, 2)))


def print_config(title: str, values: dict) -> None:
    """Effective configuration as a two-column table."""
    table = Table(show_header=False, box=None, padding=(0, 2))
    table.add_column("Key", style=f"bold {COLORS['success']}")
    table.add_column("Value", style="white")
    for key, value in values.items():
        table.add_row(key, str(value))
    console.print(Panel(table, title=f"[bold]{title}[/bold]", border_style=COLORS["muted"], box=ROUNDED, padding=(0, 1)))


def _cell(value) -> str:
    if isinstance(value, float):
        return "n/a" if math.isnan(value) else f"{value:.4g}"
    return str(value)


def print_frame(title: str, frame: pd.DataFrame) -> None:
    table = Table(title=title, box=ROUNDED, header_style=f"bold {COLORS['primary']}")
    for column in frame.columns:
        table.add_column(str(column), justify="right")
    for row in frame.itertuples(index=False):
        table.add_row(*(_cell(v) for v in row))
    console.print(table)


def print_error(message: str, exit_code: int) -> None:
    console.print(Panel(
        Text(message, style="white"),
        title=f"[bold {COLORS['error']}]error (exit {exit_code})[/bold {COLORS['error']}]",
        border_style=COLORS["error"],
        box=ROUNDED,
        padding=(0, 1),
    ))


def print_success(message: str) -> None:
    console.print(Text(message, style=f"bold {COLORS['success']}"))


def print_warning(message: str) -> None:
    console.print(Text(message, style=f"bold {COLORS['warning']}"))


def status(message: str):
    return console.status(f"[bold {COLORS['cyan']}]{message}[/bold {COLORS['cyan']}]", spinner="dots")
