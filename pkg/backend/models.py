"""
Pydantic models shared by the command-line surface
"""

# Standard library imports
from datetime import datetime
from typing import Any, Dict, Optional

# Third-party imports
from pydantic import BaseModel, Field, field_validator, model_validator


class CommandResult(BaseModel):
    command: str
    success: bool
    outputs: Dict[str, Any] = Field(default_factory=dict, description="Written files and headline numbers")
    processing_time_seconds: float = 0.0
    error_message: Optional[str] = None


class PredictionLogEntry(BaseModel):
    """One line of the prediction log, in field order"""
    timestamp: str = Field(description="UTC, RFC 3339")
    patient_id: str
    episode_id: str
    score: float = Field(ge=0.0, le=1.0)
    label: int = Field(ge=0, le=1)
    threshold: float
    model_version: int = Field(description="Bundle format version")
    model_fingerprint: str = Field(description="Checksum prefix of the scoring bundle")

    @field_validator("timestamp")
    @classmethod
    def _rfc3339_utc(cls, value: str) -> str:
        if not value.endswith("Z"):
            raise ValueError("timestamp must be UTC with a 'Z' suffix")
        datetime.fromisoformat(value[:-1] + "+00:00")
        return value

    @model_validator(mode="after")
    def _label_matches_threshold(self):
        if self.label != int(self.score >= self.threshold):
            raise ValueError("label must equal (score >= threshold)")
        return self
