"""Experiment configuration files.

An INI file with sections ``[experiment]``, ``[basis]``, ``[class]``,
``[constants]``, ``[params]`` and one ``[model.NAME]`` section per density.
Unknown sections and keys are rejected with the offending line number.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

EXPERIMENTS = (
    "coverage",
    "diameter",
    "risk_slope",
    "testing_risk",
    "chi_square",
    "prior_concentration",
    "concentration_tail",
    "calibrate",
)

CONSTANT_KEYS = ("L", "L_prime", "kappa", "L0", "M", "C_L", "k")

PARAM_KEYS = {
    "testing_risk": {"levels", "alternatives"},
    "chi_square": {"cases", "draws"},
    "prior_concentration": {"s", "B", "levels", "eps", "draws"},
    "concentration_tail": {"level", "t_grid", "C", "C1"},
}

SECTION_KEYS = {
    "experiment": {"name", "n_list", "reps", "alpha", "seed", "output", "band", "dishonest", "q"},
    "basis": {"order", "depth"},
    "class": {"r", "s", "R", "B", "zeta"},
    "constants": set(CONSTANT_KEYS) | {"calibration_n", "calibration_reps"},
}

MODEL_KEYS = {
    "kind", "name", "expected_s", "eps", "r", "s", "j", "m", "B", "j_prime", "m0",
    "amplitude", "J", "l_max", "seed", "saturated", "i0",
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names file, line and field."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n_list: tuple = (2**13,)
    reps: int = 100
    alpha: float = 0.1
    seed: int = 0
    output: str | None = None
    band: str = "two_class"
    dishonest: bool = False
    q: int | None = None
    order: int = 2
    depth: int = 14
    r: float = 0.5
    s: float = 1.0
    R: float = 2.0
    B: float = 1.0
    zeta: float = 3.5
    constants: dict = field(default_factory=dict)
    calibration_n: int = 2**12
    calibration_reps: int = 400
    params: dict = field(default_factory=dict)
    models: tuple = ()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if any(n < 2 for n in self.n_list) or not self.n_list:
            raise ConfigError(f"every n must be >= 2, got {list(self.n_list)}")
        if self.band not in ("two_class", "grid"):
            raise ConfigError(f"band must be two_class or grid, got {self.band!r}")
        if not 0 < self.r < self.s and self.band == "two_class":
            raise ConfigError(f"two-class band needs 0 < r < s, got r={self.r}, s={self.s}")
        if not 0 < self.r < self.R:
            raise ConfigError(f"need 0 < r < R, got r={self.r}, R={self.R}")
        if self.B < 1:
            raise ConfigError(f"B must be >= 1, got {self.B}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        head = re.fullmatch(r"\[([^\]]+)\]", stripped)
        if head:
            current = head.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None:
            m = re.match(r"([^=:]+?)\s*[=:]", stripped)
            if m and m.group(1) == key:
                return lineno
    return None


def _where(source: str, text: str, section: str, key: str | None = None) -> str:
    line = _line_of(text, section, key)
    loc = f"{source}:{line}" if line else source
    return f"{loc}: [{section}]" + (f" {key}" if key else "")


def _ints(raw: str) -> tuple:
    out = []
    for tok in re.split(r"[,\s]+", raw.strip()):
        if not tok:
            continue
        m = re.fullmatch(r"2\^(\d+)", tok)
        out.append(2 ** int(m.group(1)) if m else int(tok))
    return tuple(out)


def _floats(raw: str) -> tuple:
    return tuple(float(tok) for tok in re.split(r"[,\s]+", raw.strip()) if tok)


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


_EXPERIMENT_TYPES = {
    "n_list": _ints, "reps": int, "alpha": float, "seed": int, "output": str,
    "band": str, "dishonest": _bool, "q": int, "name": str,
}
_RENAME = {"name": "experiment"}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse config text into an :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    if not parser.has_section("experiment"):
        raise ConfigError(f"{source}: missing [experiment] section")
    if not parser.has_option("experiment", "name"):
        raise ConfigError(f"{_where(source, text, 'experiment')}: missing key 'name'")
    experiment = parser.get("experiment", "name").strip()
    kwargs: dict = {}
    models = []
    params = {}

    def convert(section, key, fn, raw):
        try:
            return fn(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{_where(source, text, section, key)}: {exc}") from None

    for section in parser.sections():
        items = dict(parser.items(section))
        if section.startswith("model."):
            name = section[len("model."):].strip()
            for key in items:
                if key not in MODEL_KEYS:
                    raise ConfigError(f"{_where(source, text, section, key)}: unknown key")
            if "kind" not in items:
                raise ConfigError(f"{_where(source, text, section)}: missing key 'kind'")
            spec = {"name": name, **items}
            models.append(spec)
            continue
        if section == "params":
            allowed = PARAM_KEYS.get(experiment, set())
            for key, raw in items.items():
                if key not in allowed:
                    raise ConfigError(
                        f"{_where(source, text, section, key)}: unknown key for experiment {experiment!r}"
                    )
                params[key] = raw.strip()
            continue
        if section not in SECTION_KEYS:
            raise ConfigError(f"{_where(source, text, section)}: unknown section")
        for key, raw in items.items():
            if key not in SECTION_KEYS[section]:
                raise ConfigError(f"{_where(source, text, section, key)}: unknown key")
            if section == "experiment":
                kwargs[_RENAME.get(key, key)] = convert(section, key, _EXPERIMENT_TYPES[key], raw)
            elif section == "basis":
                kwargs[key] = convert(section, key, int, raw)
            elif section == "class":
                kwargs[key] = convert(section, key, float, raw)
            elif key in ("calibration_n", "calibration_reps"):
                kwargs[key] = convert(section, key, int, raw)
            else:
                kwargs.setdefault("constants", {})[key] = convert(section, key, float, raw)

    for key in ("cases",):
        if key in params:
            params[key] = convert("params", key, _cases, params[key])
    for key in ("levels", "alternatives", "draws", "level"):
        if key in params:
            vals = convert("params", key, _ints, params[key])
            params[key] = vals if key == "levels" else vals[0]
    for key in ("s", "B", "eps", "C", "C1"):
        if key in params:
            params[key] = convert("params", key, float, params[key])
    if "t_grid" in params:
        params["t_grid"] = convert("params", "t_grid", _floats, params["t_grid"])

    kwargs["params"] = params
    kwargs["models"] = tuple(models)
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _cases(raw: str) -> tuple:
    """``M:n:gamma`` triples separated by commas."""
    out = []
    for tok in raw.split(","):
        parts = tok.strip().split(":")
        if len(parts) != 3:
            raise ValueError(f"case {tok.strip()!r} is not M:n:gamma")
        out.append((int(parts[0]), int(parts[1]), float(parts[2])))
    return tuple(out)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8 ({exc})") from None
    return parse_config(text, str(path))
