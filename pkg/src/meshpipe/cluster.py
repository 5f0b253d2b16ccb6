"""Heterogeneous cluster description: ordered homogeneous device meshes,
legal submesh shapes, and the bandwidth hierarchy between them."""

from __future__ import annotations

from dataclasses import dataclass, field


class ClusterError(ValueError):
    pass


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


# Units for spec files.  Bandwidths are decimal (5 Gbps -> 6.25e8 B/s),
# memory sizes decimal GB.  Bit units carry "ps", byte units "/s".
_BW_UNITS = {
    "bps": 1.0 / 8,
    "kbps": 1e3 / 8,
    "mbps": 1e6 / 8,
    "gbps": 1e9 / 8,
    "tbps": 1e12 / 8,
    "b/s": 1.0,
    "kb/s": 1e3,
    "mb/s": 1e6,
    "gb/s": 1e9,
    "tb/s": 1e12,
}
_FLOP_UNITS = {"flops": 1.0, "kflops": 1e3, "mflops": 1e6, "gflops": 1e9, "tflops": 1e12, "pflops": 1e15}
_BYTE_UNITS = {"b": 1.0, "kb": 1e3, "mb": 1e6, "gb": 1e9, "tb": 1e12}


def _parse_scalar(value, units: dict[str, float], what: str) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    parts = text.split()
    if len(parts) == 2:
        num, unit = parts
    else:
        # split trailing alpha unit, e.g. "5Gbps"
        idx = len(text)
        while idx > 0 and not (text[idx - 1].isdigit() or text[idx - 1] == "."):
            idx -= 1
        num, unit = text[:idx], text[idx:]
    unit = unit.strip().lower().replace("/sec", "/s")
    if not unit:
        return float(num)
    if unit not in units:
        raise ClusterError(f"cannot parse {what} {value!r} (unknown unit {unit!r})")
    return float(num) * units[unit]


def parse_bandwidth(value) -> float:
    """Accepts raw bytes/s numbers or strings like '5 Gbps' / '300 GB/s'."""
    return _parse_scalar(value, _BW_UNITS, "bandwidth")


def parse_flops(value) -> float:
    return _parse_scalar(value, _FLOP_UNITS, "peak flops")


def parse_bytes(value) -> float:
    return _parse_scalar(value, _BYTE_UNITS, "byte size")


@dataclass(frozen=True)
class DeviceMesh:
    id: str
    hosts: int
    devices_per_host: int
    peak_flops: float  # per device
    mem_device: float  # bytes per device
    intra_host_bw: float  # bytes/s
    inter_host_bw: float  # bytes/s

    def __post_init__(self):
        if self.hosts < 1:
            raise ClusterError(f"mesh {self.id}: hosts must be >= 1")
        if not _is_power_of_two(self.devices_per_host):
            raise ClusterError(f"mesh {self.id}: devices_per_host must be a power of two")
        for name in ("peak_flops", "mem_device", "intra_host_bw", "inter_host_bw"):
            if getattr(self, name) <= 0:
                raise ClusterError(f"mesh {self.id}: {name} must be positive")

    @property
    def device_count(self) -> int:
        return self.hosts * self.devices_per_host


@dataclass(frozen=True)
class Submesh:
    mesh_id: str
    n: int  # hosts used
    m: int  # devices per host used

    @property
    def device_count(self) -> int:
        return self.n * self.m

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.m)


@dataclass
class ClusterSpec:
    meshes: list[DeviceMesh]
    cross_bw: float | dict[tuple[str, str], float] = 0.0
    cross_latency: float = 0.0
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.meshes:
            raise ClusterError("cluster needs at least one mesh")
        ids = [m.id for m in self.meshes]
        if len(set(ids)) != len(ids):
            raise ClusterError("duplicate mesh ids")
        self._index = {m.id: i for i, m in enumerate(self.meshes)}
        if isinstance(self.cross_bw, dict):
            self.cross_bw = {tuple(sorted(k)): v for k, v in self.cross_bw.items()}

    def mesh(self, mesh_id: str) -> DeviceMesh:
        try:
            return self.meshes[self._index[mesh_id]]
        except KeyError:
            raise ClusterError(f"unknown mesh id {mesh_id!r}") from None

    def mesh_order(self, mesh_id: str) -> int:
        if mesh_id not in self._index:
            raise ClusterError(f"unknown mesh id {mesh_id!r}")
        return self._index[mesh_id]

    @property
    def total_devices(self) -> int:
        return sum(m.device_count for m in self.meshes)

    @property
    def total_peak_flops(self) -> float:
        return sum(m.device_count * m.peak_flops for m in self.meshes)

    def cross_bandwidth(self, a: str, b: str) -> float:
        if isinstance(self.cross_bw, dict):
            key = tuple(sorted((a, b)))
            if key not in self.cross_bw:
                raise ClusterError(f"no cross bandwidth configured for pair {key}")
            bw = self.cross_bw[key]
        else:
            bw = self.cross_bw
        if bw <= 0:
            raise ClusterError(f"cross bandwidth between {a} and {b} must be positive")
        return bw


def enumerate_submeshes(mesh: DeviceMesh) -> list[Submesh]:
    """Legal slices: (1,1),(1,2),...,(1,M) doubling, then (2,M)..(N,M).
    Ordered by device count."""
    shapes = []
    m = 1
    while m <= mesh.devices_per_host:
        shapes.append(Submesh(mesh.id, 1, m))
        m *= 2
    for n in range(2, mesh.hosts + 1):
        shapes.append(Submesh(mesh.id, n, mesh.devices_per_host))
    shapes.sort(key=lambda s: s.device_count)
    return shapes


def link_bandwidth(spec: ClusterSpec, a: Submesh, b: Submesh) -> float:
    """Bytes/s on the link carrying stage-boundary traffic between two
    submeshes: the mesh's inter-host bandwidth when both live in the same
    mesh, the configured cross bandwidth otherwise.  Symmetric."""
    mesh_a = spec.mesh(a.mesh_id)
    spec.mesh(b.mesh_id)
    if a.mesh_id == b.mesh_id:
        return mesh_a.inter_host_bw
    return spec.cross_bandwidth(a.mesh_id, b.mesh_id)


def load_cluster_spec(data: dict) -> ClusterSpec:
    """Build a ClusterSpec from parsed structured text (dict)."""
    try:
        mesh_entries = data["meshes"]
    except KeyError:
        raise ClusterError("cluster spec missing 'meshes'") from None
    meshes = []
    for entry in mesh_entries:
        meshes.append(
            DeviceMesh(
                id=str(entry["id"]),
                hosts=int(entry["hosts"]),
                devices_per_host=int(entry["devices_per_host"]),
                peak_flops=parse_flops(entry["peak_flops"]),
                mem_device=parse_bytes(entry["mem_device"]),
                intra_host_bw=parse_bandwidth(entry["intra_host_bw"]),
                inter_host_bw=parse_bandwidth(entry["inter_host_bw"]),
            )
        )
    cross = data.get("cross_bw", 0.0)
    if isinstance(cross, dict):
        cross = {
            tuple(str(k).split("-", 1)): parse_bandwidth(v) for k, v in cross.items()
        }
    else:
        cross = parse_bandwidth(cross) if cross else 0.0
    return ClusterSpec(
        meshes=meshes,
        cross_bw=cross,
        cross_latency=float(data.get("cross_latency", 0.0)),
    )
