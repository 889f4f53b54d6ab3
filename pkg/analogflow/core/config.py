from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict


class LLMSettings(BaseSettings):
    """Chat backend credentials, read from the environment only."""

    LLM_API_BASE: str = "https://api.openai.com/v1"
    LLM_API_KEY: str | None = None
    LLM_MODEL: str = "gpt-4o"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


class RailSettings(BaseModel):
    """Exact-name lists identifying the named rails (compared lower-case)."""

    vdd: tuple[str, ...] = ("vdd", "vcc", "avdd", "vdda", "vpwr")
    gnd: tuple[str, ...] = ("gnd", "0", "vss", "avss", "gnda", "vgnd")
    inputs: tuple[str, ...] = (
        "in", "inp", "inn", "in+", "in-", "vin", "vinp", "vinn", "vin+", "vin-", "vip", "vim",
    )
    outputs: tuple[str, ...] = ("out", "outp", "outn", "vout", "voutp", "voutn", "vo")


class VisionSettings(BaseModel):
    binarize_threshold: int = Field(128, ge=0, le=255)
    dilation_radius: int = Field(2, ge=0)
    area_threshold: int = Field(25, ge=0)
    centroid_eps: float = Field(8.0, ge=0)


class LLMStageSettings(BaseModel):
    model: str | None = None
    extraction_temperature: float = 0.2
    fusion_temperature: float = 0.0
    summary_temperature: float = 0.0
    agent_temperature: float = 0.2
    max_in_flight: int = Field(3, ge=1)
    timeout_s: float = 120.0


class AblationFlags(BaseModel):
    cot: bool = True
    micl: bool = True
    intent: bool = True


class ReasoningSettings(BaseModel):
    prompt_version: str = "v1"
    exemplar_dir: Path | None = None
    icl_fallback: bool = True
    tie_break: tuple[str, str, str] = ("annotated", "dual", "raw")


class SizingSettings(BaseModel):
    budget: int = Field(100, ge=1)
    gamma: float = Field(0.25, gt=0, lt=1)
    n_startup: int = Field(10, ge=1)
    n_ei_candidates: int = Field(24, ge=1)
    n_warmup: int = Field(5, ge=0)
    agent_max_steps: int = Field(12, ge=1)
    keep_thoughts: int = Field(2, ge=0)
    study_name: str = "study"
    study_storage: str | None = None


class AnalyticModelSettings(BaseModel):
    """Square-law constants for the hermetic evaluator."""

    mu_cox_n: float = 270e-6
    mu_cox_p: float = 70e-6
    vth_n: float = 0.45
    vth_p: float = 0.45
    lambda_length: float = 0.015e-6
    load_capacitance: float = 1e-12
    vdd: float = 1.8
    vin_dc: float = 0.9


class AdapterSettings(BaseModel):
    simulator: Path | None = None
    pdk_include: Path | None = None
    corner: str = "tt"
    temperature: float = 25.0
    timeout_s: float = 60.0
    tran_step: float = Field(1e-9, gt=0)
    tran_stop: float = Field(1e-6, gt=0)


class PlacementSettings(BaseModel):
    alpha: float = Field(0.95, gt=0, lt=1)
    moves_per_temperature: int = Field(200, ge=1)
    stop_ratio: float = Field(1e-3, gt=0, lt=1)
    initial_acceptance: float = Field(0.8, gt=0, lt=1)
    calibration_moves: int = Field(50, ge=1)
    initial_temperature: float | None = None
    greedy_rounds: int = Field(50, ge=1)
    w_area: float = 1.0
    w_wirelength: float = 0.5
    w_symmetry: float = 10.0
    spacing: float = Field(1.0, ge=0)
    enclosure: float = 0.5
    restarts: int = Field(1, ge=1)


class RoutingSettings(BaseModel):
    pitch: float = Field(0.5, gt=0)
    margin: float = Field(5.0, ge=0)
    base_cost: float = Field(1.0, gt=0)
    wrong_way_penalty: float = Field(1.0, ge=0)
    via_penalty: float = Field(3.0, ge=0)
    sensitivity_surcharge: float = Field(2.0, ge=0)
    congestion_weight: float = Field(1.0, ge=0)
    min_spacing: int = Field(1, ge=1)


class SuccessCriteria(BaseModel):
    netlist: bool = True
    sizing: bool = True
    layout: bool = True


class PipelineConfig(BaseSettings):
    """Run configuration.

    Values come from init kwargs (CLI overrides) and an optional key=value
    file passed as ``_env_file``; nested groups use ``__`` in the file.
    """

    mode: Literal["live", "replay", "record"] = "replay"
    seed: int
    fixtures_dir: Path | None = None
    output_dir: Path = Path("out")
    debug: bool = False

    ablation: AblationFlags = AblationFlags()
    rails: RailSettings = RailSettings()
    vision: VisionSettings = VisionSettings()
    llm: LLMStageSettings = LLMStageSettings()
    reasoning: ReasoningSettings = ReasoningSettings()
    sizing: SizingSettings = SizingSettings()
    analytic: AnalyticModelSettings = AnalyticModelSettings()
    adapter: AdapterSettings = AdapterSettings()
    placement: PlacementSettings = PlacementSettings()
    routing: RoutingSettings = RoutingSettings()
    success: SuccessCriteria = SuccessCriteria()

    model_config = SettingsConfigDict(
        env_file=None,
        env_file_encoding="utf-8",
        env_nested_delimiter="__",
        extra="forbid",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        # Environment variables are reserved for credentials.
        return (init_settings, dotenv_settings)

    @model_validator(mode="after")
    def _check_fixtures(self) -> "PipelineConfig":
        if self.mode in ("replay", "record") and self.fixtures_dir is None:
            raise ValueError(f"mode={self.mode} requires fixtures_dir")
        return self

    def with_overrides(self, **changes) -> "PipelineConfig":
        """Return a copy with top-level or nested (``group__field``) changes."""
        data = self.model_dump()
        for key, value in changes.items():
            target = data
            *parents, leaf = key.split("__")
            for parent in parents:
                target = target[parent]
            target[leaf] = value
        return type(self).model_validate(data)


llm_settings = LLMSettings()
