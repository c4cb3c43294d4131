"""
utils/run_config.py

Echoes the effective settings of a command into its output directory as
``run_config.yml``, so every artifact can be regenerated from what sits next to it.
"""

from datetime import datetime, timezone
from pathlib import Path

import yaml

from utils import snnf_config

RUN_CONFIG_NAME = "run_config.yml"


def write_run_config(output_dir, command: str, extra: dict | None = None) -> Path:
    """Write the merged settings plus command arguments; returns the file path."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / RUN_CONFIG_NAME

    document = {"command": command, **snnf_config.effective_config()}
    if extra:
        document["arguments"] = {
            key: str(value) if isinstance(value, Path) else value for key, value in extra.items()
        }

    generated_at = datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M UTC")
    source = snnf_config.source_path()
    banner = (
        "# " + "─" * 77 + "\n"
        "# AUTO-GENERATED FILE: settings in force for this run\n"
        "#\n"
        f"# Generated : {generated_at}\n"
        f"# Command   : snnf-denoise {command}\n"
        f"# Source    : {source}\n"
        "#\n"
        "# Re-run with:\n"
        f"#   snnf-denoise -f {path} {command} ...\n"
        "# " + "─" * 77 + "\n\n"
    )
    with path.open("w", encoding="utf-8") as handle:
        handle.write(banner)
        yaml.safe_dump(
            document,
            handle,
            default_flow_style=False,
            allow_unicode=True,
            sort_keys=False,
        )
    return path
