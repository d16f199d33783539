"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can map it
to an exit status and a JSON payload.
"""


class PrivGraphError(Exception):
    code = "Error"
    exit_status = 2

    def payload(self):
        return {"error": self.code, "message": str(self)}


class DataError(PrivGraphError):
    """Bad input data: malformed documents, invalid graphs, dim mismatches."""


class ParseError(DataError):
    code = "ParseError"


class SchemaError(DataError):
    code = "SchemaError"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))

    def payload(self):
        out = super().payload()
        out["violations"] = [v.as_dict() for v in self.violations]
        return out


class InvalidGraph(DataError):
    code = "InvalidGraph"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class UnknownNode(DataError):
    code = "UnknownNode"


class PathKindMismatch(DataError):
    code = "PathKindMismatch"


class DimError(DataError):
    code = "DimError"


class ConfigError(PrivGraphError):
    code = "ConfigError"
    exit_status = 1


class EmptySplit(DataError):
    code = "EmptySplit"


class NoLabeledNodes(DataError):
    code = "NoLabeledNodes"


class NoMinorityNodes(DataError):
    code = "NoMinorityNodes"


class UnreachableRatio(DataError):
    code = "UnreachableRatio"


class TooFewNeighbors(DataError):
    code = "TooFewNeighbors"


class DegenerateLabels(DataError):
    code = "DegenerateLabels"


class EmptyGraphKind(DataError):
    code = "EmptyGraphKind"


class InvalidThreshold(DataError):
    code = "InvalidThreshold"


class InvalidEpsilon(PrivGraphError):
    code = "InvalidEpsilon"
    exit_status = 1


class NumericalError(PrivGraphError):
    exit_status = 3


class NonFiniteGradient(NumericalError):
    code = "NonFiniteGradient"

    def __init__(self, tensor_name):
        self.tensor_name = tensor_name
        super().__init__(f"non-finite gradient in {tensor_name}")

    def payload(self):
        out = super().payload()
        out["tensor"] = self.tensor_name
        return out
