"""Tool for Monte-Carlo operating characteristics of the two detectors."""

from typing import List, Literal, Optional, Type

from langchain_core.callbacks import (
    AsyncCallbackManagerForToolRun,
    CallbackManagerForToolRun,
)
from langchain_core.tools import BaseTool
from pydantic import BaseModel, Field

from surgical_lc.sim import DEFAULT_WINDOWS, ScenarioSpec, operating_characteristics


class SimulateOperatingCharacteristicsInput(BaseModel):
    """Input schema for SimulateOperatingCharacteristicsTool."""

    detector: Literal["SLCA", "LCCUSUM"] = Field(
        default="SLCA",
        description="SLCA (probability of noninferiority with a cutoff) or LCCUSUM.",
    )
    h: float = Field(gt=0, description="Cutoff: CPM threshold in (0, 1) for SLCA, |s| threshold for LCCUSUM.")
    reps: int = Field(default=200, ge=1, le=100000, description="Monte-Carlo replications per scenario.")
    seed: int = Field(
        default=0, description="Base seed; each scenario and replication draws its own stream from it."
    )
    smoothing: float = Field(default=0.05, gt=0, le=1, description="WEE smoothing constant for SLCA.")
    x_eval: float = Field(default=27.0, description="BMI at which performance is assessed.")
    epsilon: float = Field(default=0.2, gt=0, description="Clinical margin.")
    windows: List[int] = Field(
        default_factory=lambda: list(DEFAULT_WINDOWS),
        description="Detection windows after the change point at case 30.",
    )
    psd_denominator: Literal["qualifying", "all"] = Field(
        default="qualifying",
        description=(
            "qualifying drops learning runs with a false alarm before case 30 from the detection "
            "denominator; all keeps them and counts them as misses."
        ),
    )


class SimulateOperatingCharacteristicsTool(BaseTool):
    """Tool for estimating false-alarm and detection probabilities by simulation.

    Simulates 100-case trainee streams under the risk-adjusted Weibull model
    with a standard of ``gamma=0.2, eta=2, beta=-0.05``. Inadequate streams keep
    the trainee rate at 0.05 and give the probability of a false alarm. Learning
    streams raise the rate from 0.05 to 0.2, and detection is counted within
    each window after case 30.

    Instantiate:
        .. code-block:: python

            from surgical_lc.tools import SimulateOperatingCharacteristicsTool

            tool = SimulateOperatingCharacteristicsTool()

    Use the tool:
        .. code-block:: python

            result = tool.invoke({"detector": "LCCUSUM", "h": 4.0, "reps": 500})
            print(result["pfa"]["estimate"], result["psd"]["20"]["estimate"])

    Tool response format:
        {
            "detector": "LCCUSUM",
            "h": 4.0,
            "reps": 500,
            "seed": 0,
            "pfa": {"estimate": 0.048, "se": 0.0096, "n": 500},
            "psd": {"20": {"estimate": 0.45, "se": 0.022, "n": 476}, ...},
            "excluded": 24,
            "psd_denominator": "qualifying"
        }
    """

    name: str = "SimulateOperatingCharacteristics"
    description: str = (
        "Estimate by Monte-Carlo simulation the probability of false alarm and the probability of "
        "successful detection of a learning-curve detector (SLCA or LC-CUSUM) at a given cutoff."
    )
    args_schema: Type[BaseModel] = SimulateOperatingCharacteristicsInput
    return_direct: bool = True

    def _run(
        self,
        h: float,
        detector: str = "SLCA",
        reps: int = 200,
        seed: int = 0,
        smoothing: float = 0.05,
        x_eval: float = 27.0,
        epsilon: float = 0.2,
        windows: Optional[List[int]] = None,
        psd_denominator: str = "qualifying",
        run_manager: Optional[CallbackManagerForToolRun] = None,
    ) -> dict:
        spec = ScenarioSpec(lambda_=smoothing, x_eval=x_eval, epsilon=epsilon)
        result = operating_characteristics(
            detector,
            spec,
            h,
            reps,
            tuple(windows or DEFAULT_WINDOWS),
            seed,
            denominator=psd_denominator,
        )
        return result.model_dump(mode="json")

    async def _arun(
        self,
        h: float,
        detector: str = "SLCA",
        reps: int = 200,
        seed: int = 0,
        smoothing: float = 0.05,
        x_eval: float = 27.0,
        epsilon: float = 0.2,
        windows: Optional[List[int]] = None,
        psd_denominator: str = "qualifying",
        run_manager: Optional[AsyncCallbackManagerForToolRun] = None,
    ) -> dict:
        return self._run(
            h=h,
            detector=detector,
            reps=reps,
            seed=seed,
            smoothing=smoothing,
            x_eval=x_eval,
            epsilon=epsilon,
            windows=windows,
            psd_denominator=psd_denominator,
            run_manager=run_manager.get_sync() if run_manager else None,
        )
