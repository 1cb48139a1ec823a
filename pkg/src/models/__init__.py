"""モデルパッケージ"""
from .network import Bus, Branch, Generator, NetworkCase, BusKind, BranchStatus, GenStatus
from .measurement import (
    ChannelKind,
    Channel,
    PmuPlacement,
    MeasurementModel,
    MeasurementVector,
    UncertainParameter,
    UncertaintySpec,
)
from .estimate import BduConfig, BduSolution, GlfpProblem, GlfpSolution, StateBounds
from .experiment import ExperimentConfig, ExperimentReport, Method, TrialRecord

__all__ = [
    'Bus', 'Branch', 'Generator', 'NetworkCase', 'BusKind', 'BranchStatus', 'GenStatus',
    'ChannelKind', 'Channel', 'PmuPlacement', 'MeasurementModel', 'MeasurementVector',
    'UncertainParameter', 'UncertaintySpec',
    'BduConfig', 'BduSolution', 'GlfpProblem', 'GlfpSolution', 'StateBounds',
    'ExperimentConfig', 'ExperimentReport', 'Method', 'TrialRecord',
]
