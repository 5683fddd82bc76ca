"""
Command-line orchestration: generate, train, finetune, score, evaluate and
benchmark.
"""

from .run_config import RunConfig, load_run_config, parse_config_text, parse_overrides
from .commands import (
    COMMANDS,
    cmd_generate,
    cmd_train,
    cmd_finetune,
    cmd_score,
    cmd_evaluate,
    cmd_benchmark,
    benchmark_configs,
    evaluate_reports,
)
from .main import build_parser, exit_code_for, main

__all__ = [
    "RunConfig",
    "load_run_config",
    "parse_config_text",
    "parse_overrides",
    "COMMANDS",
    "cmd_generate",
    "cmd_train",
    "cmd_finetune",
    "cmd_score",
    "cmd_evaluate",
    "cmd_benchmark",
    "benchmark_configs",
    "evaluate_reports",
    "build_parser",
    "exit_code_for",
    "main",
]
