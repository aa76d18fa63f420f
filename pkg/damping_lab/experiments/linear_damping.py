#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import csv

import numpy as np

from damping_lab.channel_spectral import ModeFunction
from damping_lab.experiments.base import BaseExperiment
from damping_lab.linear_flow import (
    DEFAULT_OUTPUTS,
    DEFAULT_T_END,
    DEFAULT_WINDOW,
    boundary_jump,
    damping_fit,
    energy_bound_constant,
    evolve_linear,
    initial_mode,
    relative_l2,
    representation_series,
    write_series_csv,
)
from damping_lab.logger import logger

DEFAULT_CHECK_TIMES = (1.0, 5.0, 10.0)
SLOPE_COLUMNS = ("quantity", "slope", "ci_low", "ci_high", "window_low", "window_high", "points")


def write_slopes_csv(path, fits):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SLOPE_COLUMNS)
        for quantity, fit in sorted(fits.items()):
            ci = fit["ci"] or [None, None]
            writer.writerow(
                [quantity, fit["slope"], ci[0], ci[1], *fit["window"], fit["points"]]
            )


class LinearDampingExperiment(BaseExperiment):
    """Linearized evolution of one mode, its decay rates and the
    representation-formula cross-check.

    With `linear.audit_eps` set, the energy bound constant of the
    eigenfunctions and their jump at the walls are measured across those
    shifts.
    """

    name = "linear-damping"

    def wall_audits(self, p, k, X, a):
        shifts = self.settings["linear"].get("audit_eps") or []
        if not shifts:
            return None
        constant = energy_bound_constant(p, k, X, shifts, a=a)
        self.verdict("energy_bound", self.below("energy_spread", constant["spread"]))
        jump = boundary_jump(p, k, X, eps_values=shifts, a=a)
        if not any(jump["jumps"]):
            # no b'' at the walls: nothing to vanish
            self.verdict("boundary_jump", True)
        else:
            self.verdict("boundary_jump", self.within("jump_exponent", jump["exponent"]))
        return {"energy_bound": constant, "boundary_jump": jump}

    def _run(self):
        p = self.profile()
        grid = self.grid()
        section = self.settings["linear"]
        k = int(section.get("k", 1))
        a = float(section.get("modulation", 0.0))
        window = tuple(section.get("window", DEFAULT_WINDOW))
        X = ModeFunction(k, grid.y, initial_mode(p, grid.y).values)
        t_end = float(section.get("t_end", DEFAULT_T_END))
        times = section.get("times")
        if times is None:
            times = np.linspace(0.0, t_end, DEFAULT_OUTPUTS)
        check_times = [
            t for t in section.get("check_times", DEFAULT_CHECK_TIMES) if t <= max(times)
        ]
        # the cross-check needs states at exactly these times
        times = np.union1d(times, check_times)

        series = evolve_linear(p, k, X, a=a, t_end=t_end, times=times)
        write_series_csv(self.path(f"linear_k{k}.csv"), series)
        fits = damping_fit(series, window)
        write_slopes_csv(self.path("slopes.csv"), fits)
        self.verdict("uy_slope", self.within("uy_slope", fits["uy"]["slope"]))
        self.verdict("ux_slope", self.within("ux_slope", fits["ux"]["slope"]))

        errors = []
        disagreements = []
        if check_times:
            represented = representation_series(
                p, k, X, check_times, a=a, max_concurrency=self.threads
            )
            disagreements = represented["disagreements"]
            for t, mode in zip(check_times, represented["modes"], strict=True):
                error = relative_l2(mode, series.state_at(t).phi)
                logger.info(f"Representation formula at t={t}: relative error {error:.3e}")
                errors.append(error)
            self.verdict(
                "representation", self.below("representation_error", max(errors))
            )
        audits = self.wall_audits(p, k, X, a)
        return {
            "k": k,
            "modulation": a,
            "dt": series.dt,
            "fits": fits,
            "representation": {
                "times": check_times,
                "errors": errors,
                "richardson_steps": disagreements,
            },
            "audits": audits,
        }
