"""Tool for the risk-adjusted LC-CUSUM."""

from pathlib import Path
from typing import Dict, List, Optional, Type

from langchain_core.callbacks import (
    AsyncCallbackManagerForToolRun,
    CallbackManagerForToolRun,
)
from langchain_core.tools import BaseTool
from langchain_core.utils import get_from_dict_or_env
from pydantic import BaseModel, Field, model_validator

from surgical_lc._utils import cusum_document
from surgical_lc.lccusum import run_lc_cusum
from surgical_lc.plotting import plot_cusum
from surgical_lc.tools._utils import default_profile, load_cases_path, standard_params


class LcCusumInput(BaseModel):
    """Input schema for LcCusumTool."""

    cases_path: str = Field(description="Path to the trainee's case CSV with columns case,y,x1,...,xd.")
    standard_gamma: float = Field(gt=0, description="Rate parameter gamma of the standard model.")
    standard_eta: float = Field(gt=0, description="Shape parameter eta of the standard model.")
    standard_beta: List[float] = Field(default_factory=list, description="Standard covariate coefficients.")
    h: float = Field(gt=0, description="Signal cutoff; the chart signals once |s_i| exceeds h.")
    epsilon: float = Field(default=0.2, gt=0, description="Clinical margin of the inadequate hypothesis.")
    x_eval: List[float] = Field(
        default_factory=list,
        description="Risk profile at which residuals are standardized. Defaults to the case medians.",
    )
    plot: bool = Field(default=False, description="Write an SVG of the statistic to the output directory.")

    @model_validator(mode="after")
    def check_dimensions(self):
        if self.x_eval and len(self.x_eval) != len(self.standard_beta):
            raise ValueError("x_eval must have one value per standard coefficient")
        return self


class LcCusumTool(BaseTool):
    """Tool for detecting when a trainee's operative times reach the standard.

    Runs the learning-curve CUSUM ``s_i = min(0, s_{i-1} + v_i)`` on standardized
    residuals against the standard model and reports the first case where
    ``|s_i| > h``.

    Key init args:
        output_dir: str
            Directory for SVG plots. Read from SURGICAL_LC_OUTPUT_DIR when not provided.

    Instantiate:
        .. code-block:: python

            from surgical_lc.tools import LcCusumTool

            tool = LcCusumTool()

    Use the tool:
        .. code-block:: python

            result = tool.invoke({
                "cases_path": "trainee.csv",
                "standard_gamma": 0.2,
                "standard_eta": 2.0,
                "standard_beta": [-0.05],
                "h": 4.0,
                "x_eval": [27],
            })
            print(result["signal_index"])

    Tool response format:
        {
            "h": 4.0,
            "epsilon": 0.2,
            "x_eval": [27.0],
            "signal_index": 42,
            "s": [0.0, -0.31, 0.0, ...]
        }
    """

    name: str = "LcCusum"
    description: str = (
        "Run a risk-adjusted learning-curve CUSUM on surgical operative times and report the first "
        "case at which the trainee's performance is signalled as adequate."
    )
    args_schema: Type[BaseModel] = LcCusumInput
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
        h: float,
        standard_beta: Optional[List[float]] = None,
        epsilon: float = 0.2,
        x_eval: Optional[List[float]] = None,
        plot: bool = False,
        run_manager: Optional[CallbackManagerForToolRun] = None,
    ) -> dict:
        cases = load_cases_path(cases_path)
        standard = standard_params(standard_gamma, standard_eta, standard_beta or [])
        trace = run_lc_cusum(cases, standard, epsilon, h, default_profile(cases, x_eval))
        document = cusum_document(trace)
        if plot:
            document["plot_path"] = str(plot_cusum(trace, Path(self.output_dir) / "cusum.svg"))
        return document

    async def _arun(
        self,
        cases_path: str,
        standard_gamma: float,
        standard_eta: float,
        h: float,
        standard_beta: Optional[List[float]] = None,
        epsilon: float = 0.2,
        x_eval: Optional[List[float]] = None,
        plot: bool = False,
        run_manager: Optional[AsyncCallbackManagerForToolRun] = None,
    ) -> dict:
        return self._run(
            cases_path=cases_path,
            standard_gamma=standard_gamma,
            standard_eta=standard_eta,
            h=h,
            standard_beta=standard_beta,
            epsilon=epsilon,
            x_eval=x_eval,
            plot=plot,
            run_manager=run_manager.get_sync() if run_manager else None,
        )
