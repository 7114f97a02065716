"""LangChain tools for surgical learning-curve assessment."""

from .fit_weibull_wee import FitWeibullWeeTool
from .lc_cusum import LcCusumTool
from .simulate_operating_characteristics import SimulateOperatingCharacteristicsTool
from .track_learning_curve import TrackLearningCurveTool

__all__ = [
    "FitWeibullWeeTool",
    "LcCusumTool",
    "SimulateOperatingCharacteristicsTool",
    "TrackLearningCurveTool",
]
