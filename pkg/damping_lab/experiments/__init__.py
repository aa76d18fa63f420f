#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
from damping_lab.experiments.base import (  # NOQA
    experiment_names,
    get_experiment,
    merge_settings,
)
from damping_lab.experiments.check_profile import CheckProfileExperiment  # NOQA
from damping_lab.experiments.linear_damping import LinearDampingExperiment  # NOQA
from damping_lab.experiments.nonlinear_run import NonlinearRunExperiment  # NOQA
from damping_lab.experiments.spectral_scan import SpectralScanExperiment  # NOQA
from damping_lab.experiments.theorem_rates import TheoremRatesExperiment  # NOQA
from damping_lab.experiments.weights_audit import WeightsAuditExperiment  # NOQA
