"""Flat key = value run configuration.

Files hold one dotted key per line (`solver.c = 0.05`), '#' comments and
blank lines ignored.  Values parse as int, float, bool, comma list of
numbers, or bare string, in that order.  Later sources win: preset <
config file < command-line flags, so a diff of the stored config file plus
the invocation reproduces a run exactly.
"""

from __future__ import annotations

from .errors import ConfigError


def _parse_scalar(text: str):
    t = text.strip()
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    return t


def parse_value(text: str):
    t = text.strip()
    if "," in t:
        return [_parse_scalar(p) for p in t.split(",") if p.strip()]
    return _parse_scalar(t)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = parse_value(value)
    return out


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def merge(*layers: dict) -> dict:
    """Later layers override earlier ones; None values are skipped."""
    out = {}
    for layer in layers:
        for key, value in layer.items():
            if value is not None:
                out[key] = value
    return out


def write_config(cfg: dict, path) -> None:
    with open(path, "w") as fh:
        for key in sorted(cfg):
            value = cfg[key]
            if isinstance(value, (list, tuple)):
                value = ",".join(str(v) for v in value)
            fh.write(f"{key} = {value}\n")
