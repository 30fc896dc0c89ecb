"""Exception types shared across the toolkit."""


class MiningError(Exception):
    """Base class for all toolkit errors."""


class ParseError(MiningError):
    """A malformed input line. Carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ConfigError(MiningError):
    """Invalid or incomplete pipeline configuration."""


class DegenerateData(MiningError):
    """Training data cannot support a classifier (e.g. a single language)."""


class UnknownLanguage(MiningError):
    """A language code not covered by the model / matrix / cluster map."""


class ModelFormatError(MiningError):
    """A model file is corrupt or has an unsupported version."""


class InvalidCut(MiningError):
    """Dendrogram cut criterion out of range or over-specified."""


class EmptyDocument(MiningError):
    """Operation requires a document with at least one annotated sentence."""


class EmptyCorpus(MiningError):
    """Operation requires a corpus with at least one sentence / token."""


class MissingWordlist(MiningError):
    """A cluster language has no wordlist available."""


class WrongListKind(MiningError):
    """A filter was handed a wordlist of the wrong kind."""


class LengthMismatch(MiningError):
    """Paired hypothesis/reference lists differ in length."""


class InvalidBoundaries(MiningError):
    """Frequency-bin boundaries are not strictly increasing from 0."""


class InvalidFractions(MiningError):
    """Audit label fractions outside [0, 1] or summing above 1."""


class TranslatorError(MiningError):
    """A translator backend failed on a sentence."""
