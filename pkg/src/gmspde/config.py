"""Flat key = value run configuration.

The file format is section-scoped assignments, one per line:

    [domain]
    dim = 1
    length_x = 1.0

Unknown sections or keys are hard errors (no silent typos), and
validation reports every violated invariant at once rather than the
first.  ``dumps`` emits a canonical echo such that loading the echo of
a loaded file reproduces it byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dynamics import ModelParams, SchemeConfig
from .functionals import DEFAULT_P, FunctionalConfig
from .noise import NoiseSpec
from .spectral import DomainSpec


class ConfigError(ValueError):
    """Carries the full list of parse/validation problems."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text):
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


# section -> key -> (converter, default)
SCHEMA = {
    "domain": {
        "dim": (int, 1),
        "length_x": (float, 1.0),
        "length_y": (float, 1.0),
        "convention": (str, "neumann_cosine"),
        "grid_points": (int, 64),
    },
    "model": {
        "r_u": (float, 0.01),
        "r_v": (float, 0.1),
        "kappa_u": (float, 1.0),
        "kappa_v": (float, 1.0),
        "mu_u": (float, 1.0),
        "mu_v": (float, 2.0),
        "sigma_u": (float, 0.1),
        "sigma_v": (float, 0.1),
    },
    "scheme": {
        "dt": (float, 1e-3),
        "horizon": (float, 1.0),
        "scheme": (str, "ito_imex"),
        "v_floor": (float, 1e-8),
        "dealias": (_bool, True),
        "exact_scalar_decay": (_bool, True),
        "reaction_cfl_limit": (float, 1.0),
    },
    "noise": {
        "gamma1": (float, 2.0),
        "gamma2": (float, 2.0),
        "modes": (int, 16),
        "master_seed": (int, 0),
    },
    "functionals": {
        "p": (float, DEFAULT_P),
        "rho": (float, 1.1),
        "observation_stride": (int, 10),
    },
    "run": {
        "paths": (int, 8),
        "path_index": (int, 0),
        "initial_amplitude": (float, 0.01),
    },
    "fixedpoint": {
        "max_iterations": (int, 30),
        "tolerance": (float, 1e-6),
        "ensemble_size": (int, 16),
        "bound_margin": (float, 10.0),
    },
    "uniqueness": {
        "delta": (float, 1e-8),
        "perturb_mode": (int, 1),
        "stopping_levels": (_float_list, (2.0, 4.0, 8.0, 16.0)),
    },
    "ensemble": {
        "horizons": (_float_list, ()),
    },
}


@dataclass
class RunConfig:
    """Everything a run needs, assembled from the raw key/value table."""

    raw: dict
    domain: DomainSpec
    params: ModelParams
    scheme: SchemeConfig
    noise: NoiseSpec
    functionals: FunctionalConfig
    warnings: list = field(default_factory=list)

    @property
    def run_opts(self):
        return self.raw["run"]

    @property
    def fixedpoint_opts(self):
        return self.raw["fixedpoint"]

    @property
    def uniqueness_opts(self):
        return self.raw["uniqueness"]

    @property
    def ensemble_opts(self):
        return self.raw["ensemble"]

    def with_seed(self, seed):
        raw = {sec: dict(vals) for sec, vals in self.raw.items()}
        raw["noise"]["master_seed"] = int(seed)
        return _assemble(raw)


def parse_table(text):
    """Raw (section, key) table from config text; parse problems collected."""
    problems = []
    table = {sec: dict() for sec in SCHEMA}
    seen = set()
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or stripped.startswith(";"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                problems.append(
                    f"line {lineno}: unknown section [{section}]"
                )
                section = None
            continue
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        if section is None:
            problems.append(f"line {lineno}: assignment outside any known section")
            continue
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in SCHEMA[section]:
            problems.append(
                f"line {lineno}: unknown key {key!r} in section [{section}]"
            )
            continue
        if (section, key) in seen:
            problems.append(
                f"line {lineno}: duplicate key {key!r} in section [{section}]"
            )
            continue
        seen.add((section, key))
        conv, _default = SCHEMA[section][key]
        try:
            table[section][key] = conv(value)
        except ValueError as exc:
            problems.append(f"line {lineno}: bad value for {key!r}: {exc}")
    return table, problems


def _filled(table):
    out = {}
    for sec, keys in SCHEMA.items():
        out[sec] = {}
        for key, (_conv, default) in keys.items():
            out[sec][key] = table.get(sec, {}).get(key, default)
    return out


def _assemble(raw) -> RunConfig:
    problems = []
    warnings_list = []

    dom = raw["domain"]
    lengths = (dom["length_x"],) if dom["dim"] == 1 else (
        dom["length_x"], dom["length_y"])
    domain = None
    try:
        domain = DomainSpec(
            dim=dom["dim"], lengths=lengths,
            eigenvalue_convention=dom["convention"],
            grid_points_per_axis=dom["grid_points"],
        )
    except ValueError as exc:
        problems.append(f"[domain] {exc}")

    params = None
    try:
        params = ModelParams(**raw["model"])
        zeros = [k for k, v in raw["model"].items() if v == 0]
        if zeros:
            warnings_list.append(
                f"[model] {', '.join(zeros)} = 0: the model wants strictly "
                "positive constants; zero is accepted for analytic-limit runs"
            )
    except ValueError as exc:
        problems.append(f"[model] {exc} (constants must be positive)")

    scheme = None
    try:
        sc = raw["scheme"]
        scheme = SchemeConfig(
            dt=sc["dt"], T=sc["horizon"], scheme=sc["scheme"],
            v_floor=sc["v_floor"], dealias=sc["dealias"],
            exact_scalar_decay=sc["exact_scalar_decay"],
            reaction_cfl_limit=sc["reaction_cfl_limit"],
        )
        scheme.n_steps()
    except ValueError as exc:
        problems.append(f"[scheme] {exc}")

    nspec = None
    try:
        ns = raw["noise"]
        nspec = NoiseSpec(gamma1=ns["gamma1"], gamma2=ns["gamma2"],
                          mode_count=ns["modes"],
                          master_seed=ns["master_seed"])
    except ValueError as exc:
        problems.append(f"[noise] {exc}")

    fcfg = None
    try:
        fn = raw["functionals"]
        fcfg = FunctionalConfig(p=fn["p"], rho=fn["rho"],
                                observation_stride=fn["observation_stride"])
        if domain is not None:
            fcfg.validate_for_dim(domain.dim)
    except ValueError as exc:
        problems.append(f"[functionals] {exc}")

    if domain is not None and nspec is not None:
        for j in (1, 2):
            g = nspec.gamma(j)
            if g <= domain.dim:
                warnings_list.append(
                    f"[noise] gamma{j} = {g:g} <= d = {domain.dim}: below the "
                    "trace-class margin; run proceeds"
                )
        if domain.dim == 1 and nspec.mode_count - 1 >= domain.grid_points_per_axis // 2:
            problems.append(
                f"[noise] modes = {nspec.mode_count} alias on "
                f"grid_points = {domain.grid_points_per_axis}; need "
                f"grid_points >= {2 * nspec.mode_count}"
            )

    if raw["run"]["paths"] < 1:
        problems.append("[run] paths must be >= 1")
    if raw["run"]["path_index"] < 0:
        problems.append("[run] path_index must be >= 0")
    try:
        levels = raw["uniqueness"]["stopping_levels"]
        if any(b <= a for a, b in zip(levels, levels[1:])) or not levels:
            problems.append("[uniqueness] stopping_levels must be strictly increasing")
    except (TypeError, ValueError) as exc:
        problems.append(f"[uniqueness] {exc}")
    if raw["uniqueness"]["delta"] < 0:
        problems.append("[uniqueness] delta must be >= 0")
    for h in raw["ensemble"]["horizons"]:
        if scheme is not None and h > scheme.T + 1e-12:
            problems.append(
                f"[ensemble] horizon {h:g} exceeds the scheme horizon {scheme.T:g}"
            )

    if problems:
        raise ConfigError(problems)
    return RunConfig(raw=raw, domain=domain, params=params, scheme=scheme,
                     noise=nspec, functionals=fcfg, warnings=warnings_list)


def loads(text) -> RunConfig:
    table, problems = parse_table(text)
    if problems:
        raise ConfigError(problems)
    return _assemble(_filled(table))


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def dumps(config: RunConfig) -> str:
    """Canonical echo: every key in schema order with its current value."""
    lines = []
    for sec in SCHEMA:
        lines.append(f"[{sec}]")
        for key in SCHEMA[sec]:
            lines.append(f"{key} = {_fmt(config.raw[sec][key])}")
        lines.append("")
    return "\n".join(lines)


def default_config() -> RunConfig:
    return _assemble(_filled({}))
