"""Exception hierarchy shared by every subsystem."""


class SliceLanError(Exception):
    """Base class for all errors raised by slicelan."""


class FabricError(SliceLanError):
    """The topology document describes an invalid fabric."""


class DuplicateSwitchId(FabricError):
    pass


class DanglingLink(FabricError):
    pass


class MappingGap(FabricError):
    pass


class NoDefaultQueue(FabricError):
    pass


class RoutingError(SliceLanError):
    """Forwarding tables cannot deliver a packet to its destination."""


class NoRoute(RoutingError):
    pass


class StaleArp(RoutingError):
    pass


class RoutingLoop(RoutingError):
    pass


class UnroutedFlow(SliceLanError):
    pass


class UnknownInterface(SliceLanError):
    pass


class ScenarioError(SliceLanError):
    """A scenario document failed validation."""


class ParseError(ScenarioError):
    pass


class UnknownEndpoint(ScenarioError):
    pass


class WindowOutOfRange(ScenarioError):
    pass
