"""metabridge: scholarly metadata interoperability toolkit.

Parse and emit OJS native article XML and Articulatus XML, convert between
them with declarative crosswalk rules, author records from plain-text
templates, and move records over OAI-PMH 2.0 (harvester and data provider)
backed by a file-based record store.
"""

from .model import (
    ArticleRecord,
    Author,
    GalleyFile,
    Lang,
    LocalizedText,
    Reference,
    ValidationReport,
    initials_of,
    locale_map,
    locale_unmap,
    validate_for_indexing,
)
from .store import Store

__version__ = "0.1.0"

__all__ = [
    "ArticleRecord",
    "Author",
    "GalleyFile",
    "Lang",
    "LocalizedText",
    "Reference",
    "Store",
    "ValidationReport",
    "initials_of",
    "locale_map",
    "locale_unmap",
    "validate_for_indexing",
    "__version__",
]
