#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import csv

import numpy as np

from damping_lab.experiments.linear_damping import write_slopes_csv
from damping_lab.experiments.nonlinear_run import NonlinearRunExperiment
from damping_lab.profile_diagnostics import theorem_rates

# threshold name of each fitted quantity
RATE_THRESHOLDS = {
    "profile": "profile_slope",
    "mean_flow": "mean_flow_slope",
    "uy": "uy_slope",
    "ux_fluct": "ux_slope",
}


class TheoremRatesExperiment(NonlinearRunExperiment):
    """Decay rates of a nonlinear run towards its asymptotic state.

    A quantity that is identically zero over the run (the eps = 0 case)
    passes without a fit.
    """

    name = "theorem-rates"

    def _run(self):
        config, result = self.simulate()
        window = self.settings["nonlinear"].get("window")
        rates = theorem_rates(result.snapshots, config.profile, window=window)
        series = rates["series"]
        with open(self.path("rates.csv"), "w", newline="") as f:
            writer = csv.writer(f)
            columns = ("t", *RATE_THRESHOLDS)
            writer.writerow(columns)
            for row in zip(*[series[column] for column in columns], strict=True):
                writer.writerow([repr(float(value)) for value in row])
        write_slopes_csv(self.path("slopes.csv"), rates["fits"])
        for name, threshold in RATE_THRESHOLDS.items():
            if not np.any(series[name]):
                self.verdict(name, True)
                continue
            self.verdict(name, self.within(threshold, rates["fits"][name]["slope"]))
        return {"config": config.to_dict(), "dt": result.dt, "rates": rates}
