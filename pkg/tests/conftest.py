import pytest

from gridroute.regions import NetSpec, PinSpec, RegionDescriptor, fig1_fixture


@pytest.fixture
def fig1():
    return fig1_fixture()


@pytest.fixture
def corridor_region():
    """4x2x2 region with one 2-pin net along the bottom row, pitch 1."""
    return RegionDescriptor(
        "corridor",
        (4, 2, 2),
        pitch=(1, 1),
        nets=[NetSpec(0, [PinSpec(0, [(0, 0, 0)]), PinSpec(1, [(3, 0, 0)])])],
    )


def make_region(dim, nets, blockages=(), pitch=(1, 1), name="t"):
    """Hand-build a region from {net_id: [[ap, ...] per pin]} shorthand."""
    specs = [
        NetSpec(net_id, [PinSpec(pid, list(aps)) for pid, aps in enumerate(pins)])
        for net_id, pins in sorted(nets.items())
    ]
    region = RegionDescriptor(name, dim, pitch=pitch, blockages=list(blockages), nets=specs)
    region.validate()
    return region
