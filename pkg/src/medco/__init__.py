"""Multi-agent clinical training copilot.

Role-played diagnostic dialogues, a three-store retrievable learning
memory, expert assessment loops, and ICD-10-based evaluation metrics,
driven either by an OpenAI-compatible endpoint or by deterministic
scripted roles for offline use.
"""

from .agents import Message, RoleSpec, detect_terminal, parse_addressee, strip_marker
from .backends import (BackendProfile, Backends, HashingEmbedder,
                       OpenAICompatBackend, ScriptedBackend)
from .dialogue import (DiagnosticReport, FeedbackBundle, SessionState,
                       assess_report, new_session, parse_structured_report,
                       peer_discussion, render_report, run_initial_diagnosis,
                       run_learning_case, run_practicing_case,
                       summarize_knowledge, summarize_report)
from .errors import (BackendError, CorpusError, MedcoError, MemoryFormatError,
                     MissingFixtureError, PromptError, RecordValidationError,
                     ReportParseError, SessionStateError, ToolError)
from .memory import KnowledgeCard, MemoryStores, RecallItem
from .metrics import (IcdIndex, build_icd_index, cascade_case,
                      extract_disease_entities, icd_levels, judge_hde,
                      sema_case)
from .records import (BasicInfo, Examination, ImageAttachment, MedicalRecord,
                      Truth, load_corpus, save_corpus, split_dataset,
                      validate_corpus, validate_record)
from .tools import RadiologistTools

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
