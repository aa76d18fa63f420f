#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import json

from damping_lab.experiments.base import BaseExperiment
from damping_lab.profiles import verify_assumption_A


class CheckProfileExperiment(BaseExperiment):
    """Checks the monotonicity assumption and stores the sampled profile."""

    name = "check-profile"

    def _run(self):
        p = self.profile()
        grid = self.grid()
        result = verify_assumption_A(p, ny=grid.ny)
        for clause, verdict in result["clauses"].items():
            self.verdict(clause, verdict["passed"])
        with open(self.path("profile.json"), "w") as f:
            json.dump(p.to_dict(grid.y), f, indent=2, sort_keys=True)
        return {"assumption": result}
