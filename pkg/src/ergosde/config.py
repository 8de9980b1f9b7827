"""Strict INI run configuration: known sections/keys only, exact round-trip.

A config resolves to a problem, a test function, scheme settings, and
budgets.  Unknown sections or keys are rejected by name (silent typos
corrupt studies), values are syntax-checked at parse time, and serialization
reproduces the parsed key/value pairs verbatim so parse -> serialize ->
parse is the identity.
"""

import configparser
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

from .model import AssumptionParams, SdeProblem, TestFunction, get_problem, get_test_function, make_cubic, make_linear

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_file"]


class ConfigError(ValueError):
    """Raised for malformed, unknown, or inconsistent configuration input."""


_SCHEMA = {
    "problem": {
        "name", "family", "c0", "c1", "c3", "noise", "noise_scale", "theta",
        "sigma", "gamma", "l1", "l2", "l3", "p_star", "growth_const",
    },
    "scheme": {"kind", "tau", "tau_grid", "bem_tol", "bem_max_iter"},
    "phi": {"name"},
    "budget": {
        "n_steps", "n_chains", "n_traj", "n_mc", "n_sub", "burn_in",
        "n_batches", "thin", "pilot_steps", "stderr_factor", "max_row_steps",
        "min_row_steps", "burn_time", "row_factors", "n_seeds", "x0",
        "t_max", "fine_tau", "min_em_fraction", "moment_steps",
    },
    "output": {"dir", "format", "gnuplot"},
    "run": {"seed", "workers"},
}

_FLOAT_KEYS = {
    "c0", "c1", "c3", "noise_scale", "theta", "sigma", "gamma", "l1", "l2",
    "l3", "p_star", "growth_const", "tau", "bem_tol", "stderr_factor",
    "max_row_steps", "min_row_steps", "burn_time", "x0", "t_max", "fine_tau",
    "min_em_fraction",
}
_INT_KEYS = {
    "bem_max_iter", "n_steps", "n_chains", "n_traj", "n_mc", "n_sub",
    "burn_in", "n_batches", "thin", "pilot_steps", "n_seeds", "seed",
    "workers", "moment_steps",
}
_POSITIVE_KEYS = (_FLOAT_KEYS | _INT_KEYS) - {"c0", "c1", "c3", "theta", "x0", "burn_in", "seed"}


@dataclass(frozen=True)
class RunConfig:
    """Parsed and validated configuration; sections hold raw string values."""

    sections: tuple  # ((section, ((key, value), ...)), ...)

    # -- raw access ------------------------------------------------------

    def get(self, section: str, key: str, default=None) -> str:
        for name, pairs in self.sections:
            if name == section:
                for k, v in pairs:
                    if k == key:
                        return v
        return default

    def get_float(self, section, key, default=None):
        raw = self.get(section, key)
        return float(raw) if raw is not None else default

    def get_int(self, section, key, default=None):
        raw = self.get(section, key)
        return int(raw) if raw is not None else default

    def get_bool(self, section, key, default=False):
        raw = self.get(section, key)
        if raw is None:
            return default
        return raw.strip().lower() in ("1", "true", "yes", "on")

    # -- resolution -------------------------------------------------------

    def build_problem(self) -> SdeProblem:
        name = self.get("problem", "name")
        family = self.get("problem", "family")
        if name is not None and family is not None:
            raise ConfigError("[problem] takes either 'name' or 'family', not both")
        if name is not None:
            try:
                base = get_problem(name)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            return self._override_params(base)
        if family is None:
            raise ConfigError("[problem] requires 'name' or 'family'")
        params = self._params_from_config()
        if family == "cubic":
            noise_kind = {"const": "const", "sqrt1px2": "sqrt1px2"}.get(
                self.get("problem", "noise", "const")
            )
            if noise_kind is None:
                raise ConfigError("[problem] noise must be 'const' or 'sqrt1px2'")
            return make_cubic(
                self.get_float("problem", "c0", 0.0),
                self.get_float("problem", "c1", -1.0),
                self.get_float("problem", "c3", 0.0),
                noise_kind=noise_kind,
                noise_scale=self.get_float("problem", "noise_scale", 1.0),
                params=params,
                name=f"cubic({self.get('problem', 'c0', '0')},{self.get('problem', 'c1', '-1')},{self.get('problem', 'c3', '0')})",
            )
        if family == "linear":
            return make_linear(
                theta=self.get_float("problem", "theta", 1.0),
                sigma=self.get_float("problem", "sigma", math.sqrt(2.0)),
                params=params,
                name=f"linear(theta={self.get('problem', 'theta', '1')})",
            )
        raise ConfigError(f"unknown problem family {family!r}; use 'cubic' or 'linear'")

    def _params_from_config(self):
        keys = ("gamma", "l1", "l2", "l3", "p_star", "growth_const")
        if not any(self.get("problem", k) is not None for k in keys):
            return None
        try:
            return AssumptionParams(
                gamma=self.get_float("problem", "gamma", 3.0),
                L1=self.get_float("problem", "l1", 1.0),
                L2=self.get_float("problem", "l2", 10.0),
                L3=self.get_float("problem", "l3", 0.5),
                p_star=self.get_float("problem", "p_star", 2.0),
                growth_const=self.get_float("problem", "growth_const", 6.0),
            )
        except ValueError as exc:
            raise ConfigError(f"[problem] assumption parameters invalid: {exc}") from None

    def _override_params(self, base: SdeProblem) -> SdeProblem:
        keys = ("gamma", "l1", "l2", "l3", "p_star", "growth_const")
        if not any(self.get("problem", k) is not None for k in keys):
            return base
        p = base.params
        try:
            params = AssumptionParams(
                gamma=self.get_float("problem", "gamma", p.gamma),
                L1=self.get_float("problem", "l1", p.L1),
                L2=self.get_float("problem", "l2", p.L2),
                L3=self.get_float("problem", "l3", p.L3),
                p_star=self.get_float("problem", "p_star", p.p_star),
                growth_const=self.get_float("problem", "growth_const", p.growth_const),
            )
        except ValueError as exc:
            raise ConfigError(f"[problem] assumption parameters invalid: {exc}") from None
        return SdeProblem(
            name=base.name,
            dim_state=base.dim_state,
            dim_noise=base.dim_noise,
            drift=base.drift,
            diffusion=base.diffusion,
            drift_deriv=base.drift_deriv,
            diffusion_deriv=base.diffusion_deriv,
            params=params,
            notes=base.notes,
        )

    def build_phi(self) -> TestFunction:
        name = self.get("phi", "name", "tanh")
        try:
            return get_test_function(name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def scheme_kind(self) -> str:
        kind = self.get("scheme", "kind", "tem")
        if kind not in ("em", "tem", "pem", "bem"):
            raise ConfigError(f"[scheme] unknown kind {kind!r}")
        return kind

    def scheme_opts(self) -> dict:
        opts = {}
        if self.get("scheme", "bem_tol") is not None:
            opts["bem_tol"] = self.get_float("scheme", "bem_tol")
        if self.get("scheme", "bem_max_iter") is not None:
            opts["bem_max_iter"] = self.get_int("scheme", "bem_max_iter")
        return opts

    def tau(self) -> float:
        raw = self.get_float("scheme", "tau")
        if raw is None:
            raise ConfigError("[scheme] tau is required for this command")
        return raw

    def tau_grid(self):
        raw = self.get("scheme", "tau_grid")
        if raw is None:
            raise ConfigError("[scheme] tau_grid is required for this command")
        try:
            grid = tuple(float(t) for t in raw.split(","))
        except ValueError:
            raise ConfigError(f"[scheme] tau_grid not parseable: {raw!r}") from None
        return grid

    def row_factors(self) -> dict:
        raw = self.get("budget", "row_factors")
        if raw is None:
            return {}
        out = {}
        try:
            for part in raw.split(","):
                tau_s, fac_s = part.split(":")
                out[float(tau_s)] = float(fac_s)
        except ValueError:
            raise ConfigError(f"[budget] row_factors not parseable: {raw!r}") from None
        return out

    def seed(self, override=None) -> int:
        if override is not None:
            return int(override)
        return self.get_int("run", "seed", 0)

    # -- serialization ----------------------------------------------------

    def to_ini(self) -> str:
        buf = io.StringIO()
        for name, pairs in self.sections:
            buf.write(f"[{name}]\n")
            for k, v in pairs:
                buf.write(f"{k} = {v}\n")
            buf.write("\n")
        return buf.getvalue()

    def resolved(self) -> dict:
        return {name: dict(pairs) for name, pairs in self.sections}

    def digest(self, seed: int) -> str:
        payload = json.dumps(
            {"config": self.resolved(), "seed": seed}, sort_keys=True
        ).encode()
        return hashlib.sha256(payload).hexdigest()


def _validate(section: str, key: str, value: str):
    if section not in _SCHEMA:
        raise ConfigError(f"unknown config section [{section}]")
    if key not in _SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in section [{section}]")
    if key in _FLOAT_KEYS:
        try:
            parsed = float(value)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got {value!r}") from None
        if key in _POSITIVE_KEYS and not parsed > 0:
            raise ConfigError(f"[{section}] {key} must be positive, got {value}")
    if key in _INT_KEYS:
        try:
            parsed = int(value)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}") from None
        if key in _POSITIVE_KEYS and not parsed > 0:
            raise ConfigError(f"[{section}] {key} must be positive, got {value}")


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    sections = []
    for name in parser.sections():
        pairs = []
        for key, value in parser.items(name):
            _validate(name, key, value.strip())
            pairs.append((key, value.strip()))
        sections.append((name, tuple(pairs)))
    return RunConfig(sections=tuple(sections))


def parse_config_file(path) -> RunConfig:
    with open(path, "r") as fh:
        return parse_config(fh.read())
