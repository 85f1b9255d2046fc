import logging
from enum import StrEnum

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class SystemMode(StrEnum):
    """Which typing system a judgement is checked in."""

    UNSTRATIFIED = "unstratified"
    STRATIFIED = "stratified"
    EFFECT_FREE = "effect-free"


class StratalSettings(BaseSettings):
    """Defaults for checking and running programs; CLI flags take precedence."""

    seed: int = Field(default=0, description="Default seed of the seeded scheduler")
    fuel: int = Field(default=10_000, gt=0, description="Maximum reduction steps along one path")
    instants: int = Field(default=0, ge=0, description="Maximum number of ticks per run")
    state_budget: int = Field(default=100_000, gt=0, description="State budget of exhaustive exploration")
    system: SystemMode = Field(default=SystemMode.STRATIFIED, description="Typing system used by default")
    prelude: str | None = Field(default=None, description="Set to 'int' to enable the integer extension")
    simulation_budget: int = Field(default=200, gt=0, description="Surface states explored by simulate")
    max_core_steps: int = Field(default=4, ge=1, le=4, description="Core steps allowed to match one surface step")
    log_level: str = Field(default="WARNING", description="Logging level of the command line tool")

    model_config = SettingsConfigDict(
        env_prefix="STRATAL_",
        env_file=".env",
        env_file_encoding="utf-8",
        populate_by_name=True,
    )

    @field_validator("log_level")
    @classmethod
    def normalise_level(cls, value: str) -> str:
        level = value.upper()
        if level not in logging.getLevelNamesMapping():
            raise ValueError(f"unknown log level: {value}")
        return level

    @field_validator("prelude")
    @classmethod
    def known_prelude(cls, value: str | None) -> str | None:
        if value not in (None, "int"):
            raise ValueError(f"unknown prelude: {value}")
        return value
