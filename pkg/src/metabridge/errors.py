"""Exception hierarchy shared by all metabridge modules."""

from __future__ import annotations


class MetabridgeError(Exception):
    """Base class for every error raised by this package."""


class UnsupportedLanguage(MetabridgeError):
    """A language code or locale string outside the supported set."""


# --- plain-text template ----------------------------------------------------

class TemplateError(MetabridgeError):
    """Base class for template parsing problems."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class MissingSection(TemplateError):
    pass


class DuplicateKey(TemplateError):
    def __init__(self, key: str, line: int):
        super().__init__(f"duplicate key {key!r}", line)
        self.key = key


class BadLanguageSuffix(TemplateError):
    def __init__(self, key: str, line: int):
        super().__init__(f"unsupported language suffix on key {key!r}", line)
        self.key = key


class MalformedLine(TemplateError):
    def __init__(self, line: int, text: str = ""):
        super().__init__(f"cannot parse {text!r}" if text else "cannot parse line", line)


# --- XML codecs -------------------------------------------------------------

class XmlSyntax(MetabridgeError):
    """Input is not well-formed XML, or carries structurally invalid content."""


class UnsupportedRoot(MetabridgeError):
    def __init__(self, name: str):
        super().__init__(f"unsupported root element {name!r}")
        self.name = name


class BadBase64(MetabridgeError):
    def __init__(self, filename: str):
        super().__init__(f"galley {filename!r}: payload is not valid base64")
        self.filename = filename


class MissingLocaleAttribute(MetabridgeError):
    def __init__(self, element: str, detail: str = ""):
        suffix = f" ({detail})" if detail else ""
        super().__init__(f"<{element}> is missing its locale attribute{suffix}")
        self.element = element


class MissingTitle(MetabridgeError):
    def __init__(self, identifier: str):
        super().__init__(f"record {identifier!r} has no title; cannot emit")
        self.identifier = identifier


class BadLangAttribute(MetabridgeError):
    def __init__(self, value: str):
        super().__init__(f"unsupported lang attribute {value!r}")
        self.value = value


class RuleConflict(MetabridgeError):
    """Crosswalk rule table is malformed, incomplete or self-contradictory."""


# --- OAI-PMH ----------------------------------------------------------------

class BadDatestamp(MetabridgeError):
    def __init__(self, text: str):
        super().__init__(f"not an OAI-PMH datestamp: {text!r}")
        self.text = text


class UnknownVerbElement(MetabridgeError):
    def __init__(self, name: str):
        super().__init__(f"unknown verb element {name!r} in OAI-PMH response")
        self.name = name


class NetworkError(MetabridgeError):
    """Transport-level failure after the retry budget was exhausted."""


class ProtocolError(MetabridgeError):
    """An in-protocol OAI-PMH error response."""

    def __init__(self, code, message: str = ""):
        text = getattr(code, "value", str(code))
        super().__init__(f"{text}: {message}" if message else text)
        self.code = code
        self.detail = message


# --- record store -----------------------------------------------------------

class StoreError(MetabridgeError):
    pass


class StoreWrite(StoreError):
    pass


class StoreRead(StoreError):
    pass
