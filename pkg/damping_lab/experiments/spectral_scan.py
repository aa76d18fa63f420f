#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import csv

import numpy as np

from damping_lab.experiments.base import BaseExperiment
from damping_lab.logger import logger
from damping_lab.spectral_condition import (
    DEFAULT_EPS,
    build_Lk,
    eigen_scan,
    fit_norm_decay,
    kappa_estimate,
    shifted_operator_norm,
    t_operator_norm,
)

KAPPA_COLUMNS = ("k", "y0", "eps", "kappa", "t_norm")


class SpectralScanExperiment(BaseExperiment):
    """Eigenvalue scan and kappa table over k = 1..k_max."""

    name = "spectral-scan"

    def _run(self):
        p = self.profile()
        section = self.settings["spectral"]
        k_values = list(range(1, int(section.get("k_max", 4)) + 1))
        eps_values = [float(eps) for eps in section.get("eps", DEFAULT_EPS)]
        y = np.linspace(0.0, 1.0, int(section.get("ny", self.settings["grid"]["ny"])))
        y0_values = np.linspace(0.0, 1.0, int(section.get("n_y0", 17)))

        report = kappa_estimate(
            p,
            k_values,
            y0_values=y0_values,
            eps_values=eps_values,
            grid=y,
            max_concurrency=self.threads,
        )
        for k in k_values:
            report.add_eigen_scan(eigen_scan(build_Lk(p, k, y)))
        with open(self.path("kappa.csv"), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(KAPPA_COLUMNS)
            for sample in report.samples:
                writer.writerow([sample[column] for column in KAPPA_COLUMNS])

        # T at the channel center for the finest shift
        eps = eps_values[-1]
        t_norms = [t_operator_norm(p, k, 0.5, eps, y) for k in k_values]
        slope = None
        if len(k_values) >= 2 and min(t_norms) > 0:
            slope = fit_norm_decay(k_values, t_norms)
            logger.info(f"||T|| decays like |k|^{slope:.3f}")

        low, high = p.v_range
        shifted = []
        for k in k_values:
            norm, lower = shifted_operator_norm(p, k, (low + high) / 2, eps)
            shifted.append({"k": k, "norm": norm, "kappa": lower})

        self.verdict("spectral", report.passed)
        if slope is not None:
            self.verdict("t_norm_decay", self.below("t_norm_slope", slope))
        return {
            "spectral": report.to_dict(),
            "t_norm": {"eps": eps, "y0": 0.5, "norms": t_norms, "slope": slope},
            "shifted": shifted,
        }
