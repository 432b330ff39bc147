"""Exception hierarchy.

Everything raised on bad input derives from :class:`KinemarkerError`, so the
CLI can map it to the validation exit code in one place.
"""


class KinemarkerError(Exception):
    """Base class for input/validation failures."""


# ingest

class ParseError(KinemarkerError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonFiniteCoordinate(ParseError):
    pass


class MissingJoint(ParseError):
    def __init__(self, joint, line=None):
        self.joint = joint
        super().__init__(f"missing joint {joint!r}", line)


class UnknownJoint(ParseError):
    def __init__(self, joint, convention, line=None):
        self.joint = joint
        super().__init__(f"unknown joint label {joint!r} for {convention}", line)


class UnmappedJoint(KinemarkerError):
    def __init__(self, joint, convention):
        self.joint = joint
        super().__init__(f"convention {convention!r} has no mapping for {joint}")


class UnknownConvention(KinemarkerError):
    pass


class TooFewFrames(KinemarkerError):
    pass


class InvalidSeries(KinemarkerError):
    """Recording failed validation (carries the findings)."""

    def __init__(self, findings, context=""):
        self.findings = list(findings)
        head = "; ".join(str(f) for f in self.findings[:3])
        more = f" (+{len(self.findings) - 3} more)" if len(self.findings) > 3 else ""
        prefix = f"{context}: " if context else ""
        super().__init__(f"{prefix}{head}{more}")


# kinematics

class DegenerateTriangle(KinemarkerError):
    def __init__(self, message="limb segment shorter than 1e-9 m", frame=None):
        self.frame = frame
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)


class WindowTooLong(KinemarkerError):
    pass


class InconsistentMetadata(KinemarkerError):
    pass


# temporal

class TooFewSamples(KinemarkerError):
    pass


# biomarker

class DegenerateMatrix(KinemarkerError):
    pass


# stats

class ZeroVariance(KinemarkerError):
    pass


class LengthMismatch(KinemarkerError):
    pass


class ZeroVarianceOfDifferences(ZeroVariance):
    pass


# pipeline

class ConfigError(KinemarkerError):
    pass


class NoRecordings(KinemarkerError):
    pass


class PipelineError(KinemarkerError):
    """A module error annotated with the patient/recording it came from."""

    def __init__(self, context, cause):
        self.context = context
        self.cause = cause
        super().__init__(f"{context}: {type(cause).__name__}: {cause}")
