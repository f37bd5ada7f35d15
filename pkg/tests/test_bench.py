"""
Tests for the benchmark programs and the command line.

Tests cover:
- Graph generation and partitioning
- Distributed BFS on small graphs, validation and partition invariance
- TEPS statistics, TEPS trends and level profiles
- Conformance suites at small sizes
- The edat-bench command line
"""
import inspect

import numpy as np
import pytest

from src.bench import (
    DistributedGraph,
    bfs_run,
    choose_roots,
    format_rate,
    generate_edges,
    level_profile,
    oracle_levels,
    teps_statistics,
    teps_trend,
    validate_bfs,
)
from src.bench.conformance import (
    detector_suite,
    listing_suite,
    matcher_suite,
    ordering_suite,
    persistence_suite,
)
from src.bench.demos import BARRIER_MESSAGE
from src.main import main, suite_sizes
from src.runtime import RuntimeConfig


def config(ranks=1, workers=1, **kwargs):
    return RuntimeConfig(ranks=ranks, workers=workers, **kwargs)


@pytest.fixture
def path_graph():
    """0 - 1 - 2 - 3 split over two ranks."""
    return DistributedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)], world_size=2)


@pytest.fixture(scope="module")
def small_graph():
    return DistributedGraph.generate(7, 8, seed=5, world_size=1)


class TestGraph:
    """Tests for edge generation and partitioning."""

    @pytest.mark.parametrize("generator", ["uniform", "kronecker"])
    def test_deterministic_and_in_bounds(self, generator):
        """Test the same seed gives the same edges inside the vertex range."""
        src, dst = generate_edges(8, 4, seed=3, generator=generator)
        again = generate_edges(8, 4, seed=3, generator=generator)
        assert np.array_equal(src, again[0]) and np.array_equal(dst, again[1])
        assert len(src) <= 4 * 256
        assert src.min() >= 0 and max(src.max(), dst.max()) < 256
        assert not np.any(src == dst)

    def test_seeds_differ(self):
        """Test different seeds give different graphs."""
        assert not np.array_equal(generate_edges(6, 4, 1)[0], generate_edges(6, 4, 2)[0])

    def test_bad_arguments(self):
        """Test unknown generators and scales are rejected."""
        with pytest.raises(ValueError):
            generate_edges(4, 4, 0, generator="erdos")
        with pytest.raises(ValueError):
            generate_edges(0, 4, 0)

    def test_round_robin_ownership(self, path_graph):
        """Test vertex v lives on rank v % P."""
        assert path_graph.partition(0).vertices.tolist() == [0, 2]
        assert path_graph.partition(1).vertices.tolist() == [1, 3]
        assert path_graph.owner(3) == 1

    def test_undirected_adjacency(self, path_graph):
        """Test every edge appears in both directions."""
        assert sorted(path_graph.adjacency(1).tolist()) == [0, 2]
        assert path_graph.degree(0) == 1

    def test_partition_keeps_edges(self, small_graph):
        """Test every partitioning holds the same adjacency multiset."""
        whole = small_graph.edge_multiset()
        for ranks in (2, 3, 4):
            assert np.array_equal(small_graph.repartition(ranks).edge_multiset(), whole)

    def test_self_loops_dropped(self):
        """Test from_edges drops self-loops."""
        graph = DistributedGraph.from_edges(3, [(0, 0), (0, 1)])
        assert graph.num_edges == 1

    def test_roots_are_non_isolated(self, small_graph):
        """Test chosen roots are distinct and have neighbours."""
        roots = choose_roots(small_graph, 4, seed=1)
        assert len(set(roots)) == 4
        assert all(small_graph.degree(root) > 0 for root in roots)
        assert roots == choose_roots(small_graph, 4, seed=1)


class TestBfs:
    """Tests for the level-synchronous search."""

    def test_path_graph(self, path_graph):
        """Test parents and levels on a path over two ranks."""
        result = bfs_run(path_graph, 0, config(2), timeout=30)
        assert result.parent.tolist() == [0, 0, 1, 2]
        assert result.level.tolist() == [0, 1, 2, 3]
        assert result.visited == 4
        assert validate_bfs(path_graph, result.parent, 0, result.level)

    def test_single_vertex(self):
        """Test a one-vertex graph terminates with only the root visited."""
        graph = DistributedGraph.from_edges(1, [])
        result = bfs_run(graph, 0, config(), timeout=30)
        assert result.parent.tolist() == [0]
        assert result.traversed_edges == 0

    def test_unreachable_vertex(self):
        """Test a disconnected vertex keeps parent -1."""
        graph = DistributedGraph.from_edges(4, [(0, 1), (1, 2)], world_size=2)
        result = bfs_run(graph, 1, config(2), timeout=30)
        assert result.parent.tolist() == [1, 1, 1, -1]
        assert validate_bfs(graph, result.parent, 1)

    @pytest.mark.parametrize("workers", [1, 3])
    def test_random_graph_valid(self, small_graph, workers):
        """Test searches on a random graph pass validation."""
        root = choose_roots(small_graph, 1, seed=2)[0]
        result = bfs_run(small_graph, root, config(3, workers), timeout=60)
        report = validate_bfs(small_graph, result.parent, root, result.level, result.traversed_edges)
        assert report, report.errors
        assert result.visited == report.reachable

    def test_partition_invariance(self, small_graph):
        """Test levels and traversed edges do not depend on the rank count."""
        root = choose_roots(small_graph, 1, seed=4)[0]
        one = bfs_run(small_graph, root, config(1), timeout=60)
        four = bfs_run(small_graph, root, config(4), timeout=60)
        assert np.array_equal(one.level, four.level)
        assert one.traversed_edges == four.traversed_edges
        assert one.level_counts == four.level_counts
        assert np.array_equal(one.level, oracle_levels(small_graph, root))

    def test_tcp_processes(self, path_graph):
        """Test the search over TCP rank processes."""
        result = bfs_run(path_graph, 0, config(2, transport="tcp"), timeout=60)
        assert result.parent.tolist() == [0, 0, 1, 2]

    def test_tcp_kronecker_matches_oracle(self):
        """Test a search over four TCP ranks on a skewed graph agrees with the sequential levels."""
        graph = DistributedGraph.generate(6, 8, seed=3, generator="kronecker")
        root = choose_roots(graph, 1, seed=3)[0]
        result = bfs_run(graph, root, config(4, transport="tcp"), timeout=90)
        report = validate_bfs(graph, result.parent, root, result.level, result.traversed_edges)
        assert report, report.errors
        assert np.array_equal(result.level, oracle_levels(graph, root))


class TestValidation:
    """Tests for validate_bfs rejecting bad trees."""

    def test_wrong_root_parent(self, path_graph):
        """Test the root must be its own parent."""
        assert not validate_bfs(path_graph, np.array([1, 0, 1, 2]), 0)

    def test_non_edge_parent(self, path_graph):
        """Test a parent link that is not a graph edge is caught."""
        report = validate_bfs(path_graph, np.array([0, 0, 1, 0]), 0)
        assert not report
        assert any("not in the graph" in error for error in report.errors)

    def test_missing_vertex(self, path_graph):
        """Test a reachable vertex without parent is caught."""
        report = validate_bfs(path_graph, np.array([0, 0, 1, -1]), 0)
        assert not report
        assert any("without parent" in error for error in report.errors)

    def test_corrupted_search(self, small_graph):
        """Test corrupting a real result flips the verdict."""
        root = choose_roots(small_graph, 1, seed=3)[0]
        result = bfs_run(small_graph, root, config(2), timeout=60)
        parent = result.parent.copy()
        victim = int(np.flatnonzero((parent != -1) & (np.arange(len(parent)) != root))[0])
        parent[victim] = -1
        assert not validate_bfs(small_graph, parent, root)

    def test_wrong_shape(self, path_graph):
        """Test a parent array of the wrong length is rejected."""
        assert not validate_bfs(path_graph, np.array([0, 0]), 0)


class TestMetrics:
    """Tests for TEPS statistics and profile lines."""

    def test_harmonic_mean(self):
        """Test TEPS averages as a harmonic mean."""
        stats = teps_statistics([100, 200], [1.0, 1.0])
        assert stats["harmonic_mean"] == pytest.approx(400 / 3)
        assert stats["median"] == pytest.approx(150)
        assert stats["mean_time"] == pytest.approx(1.0)

    def test_single_search(self):
        """Test one search has zero spread."""
        stats = teps_statistics([50], [0.5])
        assert stats["harmonic_mean"] == pytest.approx(100)
        assert stats["harmonic_stddev"] == 0.0

    def test_length_mismatch(self):
        """Test mismatched inputs raise ValueError."""
        with pytest.raises(ValueError):
            teps_statistics([1, 2], [1.0])

    def test_empty(self):
        """Test no searches give no statistics."""
        assert teps_statistics([], []) == {}

    def test_level_profile(self):
        """Test the trailing zero level is hidden and bars scale to the peak."""
        assert level_profile([1, 3, 2, 0]) == "levels=3 peak=3 ▃█▆"
        assert level_profile([]) == "levels=0"

    def test_level_profile_merges_deep_searches(self):
        """Test a search deeper than the width sums neighbouring levels."""
        line = level_profile([1] * 30 + [0], width=10)
        assert line == "levels=30 peak=1 " + "█" * 10

    def test_teps_trend_is_log_scaled(self):
        """Test heights follow the decade of each rate, labelled with the extremes."""
        assert teps_trend([1e2, 1e4, 1e8]) == "1.000000e+02 ▁▃█ 1.000000e+08"

    def test_teps_trend_keeps_newest(self):
        """Test only the newest rates are drawn and unusable ones are skipped."""
        line = teps_trend([None, 0.0] + [10.0] * 50 + [1000.0], width=10)
        low, bars, high = line.split(" ")
        assert bars == "▁" * 9 + "█"
        assert (low, high) == ("1.000000e+01", "1.000000e+03")

    @pytest.mark.parametrize("history", [[], [None], [0.0, -1.0]])
    def test_teps_trend_without_rates(self, history):
        """Test an empty or unusable history gives no trend."""
        assert teps_trend(history) == ""

    def test_teps_trend_flat(self):
        """Test equal rates draw mid-height bars."""
        assert teps_trend([5.0, 5.0]) == "5.000000e+00 ▄▄ 5.000000e+00"

    def test_format_rate(self):
        """Test rates print in exponent form."""
        assert format_rate(1234567.0) == "1.234567e+06"
        assert format_rate(None) == "-"


class TestConformanceSuites:
    """Small runs of each property suite."""

    def test_matcher(self):
        """Test the matcher agrees with the reference model."""
        result = matcher_suite(cases=300, seed=11)
        assert result.passed, result.failures[:3]
        assert result.cases == 300

    def test_listing(self):
        """Test the listing gives 133 under several delivery orders."""
        assert listing_suite(seeds=3).passed

    def test_ordering(self):
        """Test per-source order and ALL-slot order hold on loopback."""
        result = ordering_suite(seeds=3, tcp_runs=0)
        assert result.passed, result.failures[:3]
        assert result.cases == 3

    def test_ordering_four_tcp_ranks(self):
        """Test per-pair FIFO and slot order between four TCP rank processes."""
        result = ordering_suite(seeds=0, tcp_runs=1, tcp_ranks=4, count=40)
        assert result.passed, result.failures[:3]
        assert result.cases == 1

    def test_detector(self):
        """Test finalise never returns before all chained work ran."""
        result = detector_suite(seeds=3)
        assert result.passed, result.failures[:3]

    def test_persistence(self):
        """Test idle persistent tasks and events do not block finalise."""
        assert persistence_suite().passed

    @pytest.mark.parametrize("suite, parameter, size", [
        (matcher_suite, "cases", 10000),
        (listing_suite, "seeds", 100),
        (ordering_suite, "seeds", 1000),
        (ordering_suite, "tcp_runs", 1),
        (detector_suite, "seeds", 1000),
    ])
    def test_full_sizes_are_suite_defaults(self, suite, parameter, size):
        """Test a full conformance run uses the suites' own default sizes."""
        assert inspect.signature(suite).parameters[parameter].default == size
        assert parameter not in suite_sizes(quick=False, seed=0).get(suite.__name__.removesuffix("_suite"), {})

    def test_quick_sizes(self):
        """Test quick runs shrink every seeded suite and skip TCP."""
        sizes = suite_sizes(quick=True, seed=4)
        assert sizes["matcher"] == {"cases": 500, "seed": 4}
        assert sizes["ordering"]["tcp_runs"] == 0
        assert sizes["detector"]["seeds"] < 1000


class TestCli:
    """Tests for edat-bench main()."""

    def test_reduce_demo(self, capsys):
        """Test reduce-demo prints the rank-id sum."""
        assert main(["-q", "reduce-demo", "--ranks", "4", "--workers", "1"]) == 0
        assert capsys.readouterr().out.strip() == "6"

    def test_barrier_demo(self, capsys):
        """Test barrier-demo prints the barrier message."""
        assert main(["-q", "barrier-demo", "--ranks", "3", "--workers", "1", "--det-seed", "2"]) == 0
        assert BARRIER_MESSAGE in capsys.readouterr().out

    def test_bfs(self, capsys):
        """Test bfs prints TEPS, the verdict and a level profile."""
        code = main(["-q", "bfs", "--scale", "5", "--edge-factor", "4", "--ranks", "2", "--workers", "1"])
        lines = capsys.readouterr().out.strip().splitlines()
        assert code == 0
        assert lines[0].startswith("TEPS=")
        assert lines[1] == "VALID"
        assert lines[2].startswith("levels=")

    def test_conformance_quick(self, capsys):
        """Test one quick suite from the command line."""
        assert main(["-q", "conformance", "--suite", "persistence", "--quick"]) == 0
        assert "persistence" in capsys.readouterr().out

    def test_invalid_config(self, capsys):
        """Test invalid runtime values exit with status 2."""
        assert main(["-q", "reduce-demo", "--ranks", "0"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_usage_error(self):
        """Test unknown choices are argparse usage errors."""
        with pytest.raises(SystemExit) as info:
            main(["bfs", "--generator", "erdos"])
        assert info.value.code == 2

    def test_missing_command(self):
        """Test a subcommand is required."""
        with pytest.raises(SystemExit):
            main([])
