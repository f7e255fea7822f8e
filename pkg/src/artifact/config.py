"""Run configuration: an INI file read with :mod:`configparser`.

Every section and key is optional; omitted keys take the defaults below.
Unknown sections or keys are errors, so a typo never silently falls back to
a default.  ``RunConfig.to_ini`` writes the canonical form and
``RunConfig.sha256`` hashes it without the [output] section; every output
file carries that hash.

    [potential]   kind = quartic | polynomial
                  scale, a, b            (quartic)
                  coefficients, a, b     (polynomial, increasing powers)
    [geometry]    kind = circle | ellipse ; radius ; p ; q
    [data]        g0 ; amplitude ; mode   (g = g0 + amplitude cos(mode theta))
    [ladder]      eps = comma-separated, strictly decreasing, >= 4 entries
    [schedule]    kind = power | log | linear ; m
    [grid]        nodes_per_eps ; layer_widths ; growth ; cap ; n_theta
    [oned]        T ; slope ; alpha ; gamma ; ladder
    [coeff]       alpha = comma-separated levels
    [recovery]    l_grid = comma-separated
    [checks]      c1_tol ; c2_tol ; oned_tol ; oracle_tol
    [output]      dir
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, HypothesisError

DEFAULTS: dict[str, dict[str, str]] = {
    "potential": {"kind": "quartic", "scale": "1.0", "a": "-1.0", "b": "1.0", "coefficients": ""},
    "geometry": {"kind": "circle", "radius": "1.0", "p": "2.0", "q": "1.0"},
    "data": {"g0": "0.2", "amplitude": "0.0", "mode": "1"},
    "ladder": {"eps": "0.08, 0.04, 0.02, 0.01, 0.005"},
    "schedule": {"kind": "power", "m": "2.0"},
    "grid": {"nodes_per_eps": "40", "layer_widths": "16.0", "growth": "1.04", "cap": "0.05", "n_theta": "32"},
    "oned": {"T": "0.25", "slope": "-0.25", "alpha": "0.0", "gamma": "1.5",
             "ladder": "0.04, 0.02, 0.01, 0.005, 0.002"},
    "coeff": {"alpha": "0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0"},
    "recovery": {"l_grid": "1, 2, 4, 8, 16"},
    "checks": {"c1_tol": "0.01", "c2_tol": "0.10", "oned_tol": "0.05", "oracle_tol": "0.005"},
    "output": {"dir": "out"},
}


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _fmt(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


@dataclass(frozen=True)
class RunConfig:
    sections: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULTS.items()})

    # -- parsing ----------------------------------------------------------
    @classmethod
    def from_string(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        parser.optionxform = str  # keys are case-sensitive (T)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        merged = {k: dict(v) for k, v in DEFAULTS.items()}
        for name in parser.sections():
            if name not in DEFAULTS:
                raise ConfigError(f"unknown section [{name}]")
            for key, value in parser.items(name):
                if key not in DEFAULTS[name]:
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
                merged[name][key] = value.strip()
        cfg = cls(merged)
        cfg.validate()
        return cfg.canonical()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_string(text)

    def canonical(self) -> "RunConfig":
        """Normalise number formatting so that serialisation round-trips exactly."""
        out = {}
        for name, entries in self.sections.items():
            out[name] = {}
            for key, value in entries.items():
                if key in ("kind", "dir") or (name == "potential" and key == "coefficients" and not value):
                    out[name][key] = value
                elif "," in value or key in ("eps", "ladder", "alpha", "l_grid", "coefficients"):
                    out[name][key] = _fmt(_floats(value))
                elif key in ("nodes_per_eps", "n_theta", "mode"):
                    out[name][key] = str(int(float(value)))
                else:
                    out[name][key] = repr(float(value))
        return RunConfig(out)

    def to_ini(self, skip=()) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for name in DEFAULTS:
            if name in skip:
                continue
            parser[name] = self.sections[name]
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @property
    def sha256(self) -> str:
        """Hash of every section that affects results; [output] only says where they go."""
        return hashlib.sha256(self.to_ini(skip=("output",)).encode()).hexdigest()

    def get(self, section: str, key: str) -> str:
        return self.sections[section][key]

    def num(self, section: str, key: str) -> float:
        try:
            return float(self.sections[section][key])
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} is not a number") from exc

    # -- validation -------------------------------------------------------
    def validate(self) -> None:
        for name, entries in self.sections.items():
            for key, value in entries.items():
                if key in ("kind", "dir") or (key == "coefficients" and not value.strip()):
                    continue
                _floats(value) if ("," in value or key in ("eps", "ladder", "alpha", "l_grid", "coefficients")) \
                    else self.num(name, key)
        if self.get("potential", "kind") not in ("quartic", "polynomial"):
            raise ConfigError("potential kind must be quartic or polynomial")
        if self.get("geometry", "kind") not in ("circle", "ellipse"):
            raise ConfigError("geometry kind must be circle or ellipse")
        if self.get("schedule", "kind") not in ("power", "log", "linear"):
            raise ConfigError("schedule kind must be power, log or linear")
        self.ladder()  # raises on bad ladders
        self.oned_ladder()

    # -- typed views ------------------------------------------------------
    def potential(self):
        from .potential import PotentialSpec

        a, b = self.num("potential", "a"), self.num("potential", "b")
        if self.get("potential", "kind") == "quartic":
            return PotentialSpec.quartic(self.num("potential", "scale"), a, b)
        coeffs = _floats(self.get("potential", "coefficients"))
        if not coeffs:
            raise ConfigError("polynomial potential needs coefficients")
        poly = np.polynomial.Polynomial(coeffs)
        d1, d2 = poly.deriv(1), poly.deriv(2)
        if not a < b:
            raise HypothesisError("degenerate wells: need a < b")
        return PotentialSpec.from_callables(poly, d1, d2, a, b)

    def geometry(self):
        from .geometry import Circle, Ellipse

        if self.get("geometry", "kind") == "circle":
            return Circle(self.num("geometry", "radius"))
        return Ellipse(self.num("geometry", "p"), self.num("geometry", "q"))

    def data(self):
        from .geometry import BoundaryData

        return BoundaryData(self.num("data", "g0"), self.num("data", "amplitude"), int(self.num("data", "mode")))

    def ladder(self):
        from .asymptotics import EpsilonLadder

        return EpsilonLadder(_floats(self.get("ladder", "eps")))

    def oned_ladder(self):
        from .asymptotics import EpsilonLadder

        return EpsilonLadder(_floats(self.get("oned", "ladder")))

    def schedule(self):
        from .recovery import DeltaSchedule

        return DeltaSchedule(self.get("schedule", "kind"), self.num("schedule", "m"))

    def grid_spec(self):
        from .oned import GridSpec

        return GridSpec(
            nodes_per_eps=int(self.num("grid", "nodes_per_eps")),
            layer_widths=self.num("grid", "layer_widths"),
            growth=self.num("grid", "growth"),
            cap=self.num("grid", "cap"),
        )

    @property
    def n_theta(self) -> int:
        return int(self.num("grid", "n_theta"))

    def oned_template(self, spec):
        from .oned import Weight, WeightedProblem1D

        weight = Weight.linear(self.num("oned", "T"), self.num("oned", "slope"))
        eps0 = self.oned_ladder().eps[0]
        return WeightedProblem1D.boundary_layer(spec, weight, eps0, self.num("oned", "alpha"), self.num("oned", "gamma"))

    def coeff_levels(self) -> tuple[float, ...]:
        return _floats(self.get("coeff", "alpha"))

    def l_grid(self) -> tuple[float, ...]:
        return _floats(self.get("recovery", "l_grid"))

    @property
    def output_dir(self) -> Path:
        return Path(self.get("output", "dir"))

    def with_output(self, directory) -> "RunConfig":
        secs = {k: dict(v) for k, v in self.sections.items()}
        secs["output"]["dir"] = str(directory)
        return RunConfig(secs)
