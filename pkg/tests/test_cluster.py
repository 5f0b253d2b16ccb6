import pytest

from meshpipe.cluster import (
    ClusterError,
    ClusterSpec,
    DeviceMesh,
    Submesh,
    enumerate_submeshes,
    link_bandwidth,
    load_cluster_spec,
    parse_bandwidth,
    parse_bytes,
    parse_flops,
)


def mesh(id="m", hosts=1, per_host=2, peak=125e12, mem=32e9):
    return DeviceMesh(id, hosts, per_host, peak, mem, 150e9, 25e9)


class TestEnumeration:
    def test_single_host_pair(self):
        shapes = [s.shape for s in enumerate_submeshes(mesh(hosts=1, per_host=2))]
        assert shapes == [(1, 1), (1, 2)]

    def test_two_by_two(self):
        shapes = [s.shape for s in enumerate_submeshes(mesh(hosts=2, per_host=2))]
        assert shapes == [(1, 1), (1, 2), (2, 2)]

    def test_four_by_eight(self):
        shapes = [s.shape for s in enumerate_submeshes(mesh(hosts=4, per_host=8))]
        assert shapes == [(1, 1), (1, 2), (1, 4), (1, 8), (2, 8), (3, 8), (4, 8)]

    def test_counts_and_uniqueness(self):
        m = mesh(hosts=3, per_host=4)
        subs = enumerate_submeshes(m)
        assert len(subs) == len(set(subs))
        assert all(s.device_count <= m.device_count for s in subs)
        assert [s.device_count for s in subs] == sorted(s.device_count for s in subs)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ClusterError):
            mesh(per_host=3)


class TestBandwidth:
    def test_same_mesh_uses_inter_host(self):
        a = mesh("a")
        spec = ClusterSpec([a], cross_bw=1e9)
        s1, s2 = Submesh("a", 1, 1), Submesh("a", 1, 2)
        assert link_bandwidth(spec, s1, s2) == a.inter_host_bw

    def test_cross_5gbps(self):
        spec = ClusterSpec([mesh("a"), mesh("b")], cross_bw=parse_bandwidth("5 Gbps"))
        got = link_bandwidth(spec, Submesh("a", 1, 2), Submesh("b", 1, 2))
        assert got == 6.25e8

    def test_symmetric(self):
        spec = ClusterSpec(
            [mesh("a"), mesh("b")], cross_bw={("a", "b"): 2e9}
        )
        x = link_bandwidth(spec, Submesh("a", 1, 1), Submesh("b", 1, 1))
        y = link_bandwidth(spec, Submesh("b", 1, 1), Submesh("a", 1, 1))
        assert x == y == 2e9

    def test_unknown_mesh(self):
        spec = ClusterSpec([mesh("a")], cross_bw=1e9)
        with pytest.raises(ClusterError):
            link_bandwidth(spec, Submesh("a", 1, 1), Submesh("zz", 1, 1))


class TestParsing:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("5 Gbps", 6.25e8),
            ("200 Gbps", 2.5e10),
            ("300 GB/s", 3e11),
            ("1.5 MB/s", 1.5e6),
            (2.5e9, 2.5e9),
        ],
    )
    def test_bandwidth(self, text, expected):
        assert parse_bandwidth(text) == pytest.approx(expected)

    def test_flops_and_bytes(self):
        assert parse_flops("312 TFLOPS") == 312e12
        assert parse_bytes("40 GB") == 40e9
        with pytest.raises(ClusterError):
            parse_bandwidth("5 furlongs")

    def test_load_cluster_spec(self):
        data = {
            "meshes": [
                {
                    "id": "v100",
                    "hosts": 1,
                    "devices_per_host": 2,
                    "peak_flops": "125 TFLOPS",
                    "mem_device": "32 GB",
                    "intra_host_bw": "150 GB/s",
                    "inter_host_bw": "200 Gbps",
                },
                {
                    "id": "a100",
                    "hosts": 2,
                    "devices_per_host": 2,
                    "peak_flops": "312 TFLOPS",
                    "mem_device": "40 GB",
                    "intra_host_bw": "300 GB/s",
                    "inter_host_bw": "200 Gbps",
                },
            ],
            "cross_bw": "5 Gbps",
        }
        spec = load_cluster_spec(data)
        assert spec.total_devices == 6
        assert spec.mesh("v100").peak_flops == 125e12
        assert spec.cross_bandwidth("v100", "a100") == 6.25e8
        assert spec.mesh_order("a100") == 1
