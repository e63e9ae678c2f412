from .service import create_app, serve
from .store import (
    MULTI,
    NONE_CANDIDATE_ID,
    SINGLE,
    SUBTASKS,
    ReviewError,
    ReviewStore,
    SourceDescriptor,
    Survey,
    SurveyItem,
    Tally,
    VoteRecord,
)

__all__ = [
    "MULTI",
    "NONE_CANDIDATE_ID",
    "SINGLE",
    "SUBTASKS",
    "ReviewError",
    "ReviewStore",
    "SourceDescriptor",
    "Survey",
    "SurveyItem",
    "Tally",
    "VoteRecord",
    "create_app",
    "serve",
]
