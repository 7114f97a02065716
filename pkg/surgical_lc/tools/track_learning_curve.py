"""Tool for sequential learning-curve assessment against a standard."""

from pathlib import Path
from typing import Dict, List, Literal, Optional, Type

from langchain_core.callbacks import (
    AsyncCallbackManagerForToolRun,
    CallbackManagerForToolRun,
)
from langchain_core.tools import BaseTool
from langchain_core.utils import get_from_dict_or_env
from pydantic import BaseModel, Field, model_validator

from surgical_lc._utils import series_document
from surgical_lc.cpm import cpm_config
from surgical_lc.plotting import plot_series
from surgical_lc.slca import DEFAULT_WARMUP, run_slca
from surgical_lc.tools._utils import default_profile, load_cases_path, standard_params


class TrackLearningCurveInput(BaseModel):
    """Input schema for TrackLearningCurveTool."""

    cases_path: str = Field(
        description="Path to the trainee's case CSV with columns case,y,x1,...,xd.",
    )
    standard_gamma: float = Field(gt=0, description="Rate parameter gamma of the standard performance model.")
    standard_eta: float = Field(gt=0, description="Shape parameter eta of the standard performance model.")
    standard_beta: List[float] = Field(
        default_factory=list,
        description="Covariate coefficients of the standard model, one per x column.",
    )
    smoothing: float = Field(default=0.05, gt=0, le=1, description="WEE smoothing constant lambda.")
    kind: Literal["PA", "PN"] = Field(
        default="PN",
        description="PN (noninferiority) or PA (agreement) probability.",
    )
    epsilon: float = Field(default=0.2, gt=0, description="Clinical margin, 0.2 means 20% slower is acceptable.")
    cutoff: float = Field(default=0.95, gt=0, lt=1, description="Probability that declares expertise.")
    x_eval: List[float] = Field(
        default_factory=list,
        description="Patient risk profile to assess at (e.g. [27] for BMI 27). Defaults to the case medians.",
    )
    n0: int = Field(default=DEFAULT_WARMUP, ge=1, description="Number of cases before the first assessment.")
    persistence: int = Field(default=1, ge=1, description="Consecutive cases the cutoff must hold.")
    plot: bool = Field(default=False, description="Write an SVG of the series to the output directory.")

    @model_validator(mode="after")
    def check_dimensions(self):
        if self.x_eval and len(self.x_eval) != len(self.standard_beta):
            raise ValueError("x_eval must have one value per standard coefficient")
        return self


class TrackLearningCurveTool(BaseTool):
    """Tool for tracking whether a trainee surgeon has reached expert performance.

    After every case the trainee's operative-time model is refitted with
    weighted estimating equations and compared with the standard at a fixed
    patient risk profile. Each case yields the risk-adjusted mean operative
    time, the relative risk and the probability of noninferiority (or
    agreement), all with confidence intervals. The expertise time is the first
    case whose probability reaches the cutoff.

    Setup:
        Install surgical-lc. Set an output directory if plots are wanted:

        .. code-block:: bash

            pip install surgical-lc
            export SURGICAL_LC_OUTPUT_DIR="./out"

    Key init args:
        output_dir: str
            Directory for SVG plots. If not provided, read from SURGICAL_LC_OUTPUT_DIR
            and finally the working directory.

    Instantiate:
        .. code-block:: python

            from surgical_lc.tools import TrackLearningCurveTool

            tool = TrackLearningCurveTool()
            tool = TrackLearningCurveTool(output_dir="./plots")

    Use the tool:
        .. code-block:: python

            result = tool.invoke({
                "cases_path": "trainee.csv",
                "standard_gamma": 0.1099,
                "standard_eta": 1.9220,
                "standard_beta": [-0.0201],
                "x_eval": [27],
            })
            print(result["expertise_time"])

    Async usage:
        .. code-block:: python

            result = await tool.ainvoke({...})

    Tool response format:
        {
            "x_eval": [27.0],
            "lambda": 0.05,
            "kind": "PN",
            "cutoff": 0.95,
            "expertise_time": 100,
            "final_fit_failed": false,
            "points": [
                {"i": 10, "mu": 5.1, "mu_lo": 4.2, "mu_hi": 6.0, "r": 1.37, ...,
                 "cpm": 0.08, "cpm_lo": 0.01, "cpm_hi": 0.33, "fit_ok": 1},
                ...
            ],
            "plot_path": "out/track.svg"
        }
    """

    name: str = "TrackLearningCurve"
    description: str = (
        "Assess a trainee surgeon's learning curve case by case against a standard performance model. "
        "Returns risk-adjusted mean operative times, relative risks and the probability of "
        "noninferiority with confidence intervals, plus the case at which expertise is reached."
    )
    args_schema: Type[BaseModel] = TrackLearningCurveInput
    return_direct: bool = True
    output_dir: str

    @model_validator(mode="before")
    @classmethod
    def validate_environment(cls, values: Dict) -> Dict:
        """Resolve the plot directory from the environment."""
        values["output_dir"] = get_from_dict_or_env(
            values, "output_dir", "SURGICAL_LC_OUTPUT_DIR", default="."
        )
        return values

    def _run(
        self,
        cases_path: str,
        standard_gamma: float,
        standard_eta: float,
        standard_beta: Optional[List[float]] = None,
        smoothing: float = 0.05,
        kind: str = "PN",
        epsilon: float = 0.2,
        cutoff: float = 0.95,
        x_eval: Optional[List[float]] = None,
        n0: int = DEFAULT_WARMUP,
        persistence: int = 1,
        plot: bool = False,
        run_manager: Optional[CallbackManagerForToolRun] = None,
    ) -> dict:
        """Run the sequential assessment.

        Args:
            cases_path: Path to the trainee's case CSV
            standard_gamma: Standard rate parameter
            standard_eta: Standard shape parameter
            standard_beta: Standard covariate coefficients
            smoothing: WEE smoothing constant
            kind: PN or PA
            epsilon: Clinical margin
            cutoff: Decision cutoff for the probability
            x_eval: Risk profile to assess at
            n0: Warm-up cases
            persistence: Consecutive cases above the cutoff
            plot: Write an SVG
            run_manager: Callback manager for the tool run

        Returns:
            Dictionary with the per-case series and the expertise time
        """
        cases = load_cases_path(cases_path)
        standard = standard_params(standard_gamma, standard_eta, standard_beta or [])
        cfg = cpm_config(kind=kind, epsilon=epsilon, cutoff=cutoff)
        profile = default_profile(cases, x_eval)
        series = run_slca(cases, standard, smoothing, cfg, profile, n0, persistence)
        document = series_document(series)
        if plot:
            path = plot_series(series, standard, Path(self.output_dir) / "track.svg")
            document["plot_path"] = str(path)
        return document

    async def _arun(
        self,
        cases_path: str,
        standard_gamma: float,
        standard_eta: float,
        standard_beta: Optional[List[float]] = None,
        smoothing: float = 0.05,
        kind: str = "PN",
        epsilon: float = 0.2,
        cutoff: float = 0.95,
        x_eval: Optional[List[float]] = None,
        n0: int = DEFAULT_WARMUP,
        persistence: int = 1,
        plot: bool = False,
        run_manager: Optional[AsyncCallbackManagerForToolRun] = None,
    ) -> dict:
        return self._run(
            cases_path=cases_path,
            standard_gamma=standard_gamma,
            standard_eta=standard_eta,
            standard_beta=standard_beta,
            smoothing=smoothing,
            kind=kind,
            epsilon=epsilon,
            cutoff=cutoff,
            x_eval=x_eval,
            n0=n0,
            persistence=persistence,
            plot=plot,
            run_manager=run_manager.get_sync() if run_manager else None,
        )
