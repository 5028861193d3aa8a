"""The command-line surface: subcommands, exit codes, determinism."""

import json
from pathlib import Path

import numpy as np
import pytest

from deepdim import forward, storage
from deepdim.activations import LayerActivations
from deepdim.cli import EXIT_MISMATCH, EXIT_OK, EXIT_REJECTED, EXIT_USAGE, main
from deepdim.synthetic import sample_independent_blocks

from conftest import blocks_to_layer, seed_image, tiny_network

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def tiny_net_path(tmp_path):
    path = tmp_path / "net.json"
    forward.write_network(tiny_network(), path)
    return str(path)


@pytest.fixture
def seed_image_path(tmp_path):
    path = tmp_path / "seed.ppm"
    storage.write_image(seed_image(), path)
    return str(path)


def store_layer(tmp_path, acts, name="layer.actv"):
    path = tmp_path / name
    storage.write_activations(acts, path)
    return str(path)


class TestSynth:
    def test_recovers_known_dimension(self, capsys):
        rc = main(
            "synth --ambient 512 --intrinsic 37 --n 200 --noise 1e-10 --expect".split()
        )
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        assert "estimated dimension: 37" in out

    def test_expect_mismatch_exits_3(self, capsys):
        # noise at the coefficient scale destroys the drop
        rc = main(
            "synth --ambient 60 --intrinsic 5 --n 40 --noise 2.0 --expect".split()
        )
        assert rc == EXIT_MISMATCH
        assert "mismatch" in capsys.readouterr().out

    def test_invalid_spec_exits_2(self, capsys):
        rc = main("synth --ambient 10 --intrinsic 0 --n 20".split())
        assert rc == EXIT_USAGE
        assert "error:" in capsys.readouterr().err

    def test_bad_theta_exits_2(self):
        assert main("synth --ambient 10 --intrinsic 2 --n 20 --theta 0.5".split()) == EXIT_USAGE

    def test_deterministic_stdout(self, capsys):
        argv = "synth --ambient 40 --intrinsic 6 --n 30 --seed 9".split()
        assert main(argv) == EXIT_OK
        first = capsys.readouterr().out
        assert main(argv) == EXIT_OK
        assert capsys.readouterr().out == first


class TestEstimate:
    def test_known_rank_layer(self, tmp_path, capsys):
        blocks = sample_independent_blocks([5, 4, 3], rows_per_block=10, n=50, seed=6)
        path = store_layer(tmp_path, blocks_to_layer(blocks, "synth12"))
        rc = main(["estimate", path, "--concat", "--original"])
        assert rc == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        row = doc["layers"][0]
        assert row["layer"] == "synth12"
        assert row["estimated"] == 12
        assert row["concatenated"] == 12
        assert row["original"] == 12

    def test_map_selection_is_reproducible(self, tmp_path):
        rng = np.random.default_rng(31)
        acts = LayerActivations("wide", rng.standard_normal((10, 8, 3, 3)))
        path = store_layer(tmp_path, acts)
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            rc = main(
                ["estimate", path, "--maps", "3", "--map-seed", "17", "--output", str(out)]
            )
            assert rc == EXIT_OK
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        doc = json.loads(outs[0])
        assert len(doc["layers"][0]["map_indices"]) == 3

    def test_single_channel_three_equal_numbers(self, tmp_path, capsys):
        rng = np.random.default_rng(32)
        acts = LayerActivations("fc", rng.standard_normal((12, 1, 9, 1)))
        path = store_layer(tmp_path, acts)
        rc = main(["estimate", path, "--concat", "--original"])
        assert rc == EXIT_OK
        row = json.loads(capsys.readouterr().out)["layers"][0]
        assert row["estimated"] == row["concatenated"] == row["original"]

    def test_manifest_source(self, tmp_path, capsys):
        acts = blocks_to_layer(
            sample_independent_blocks([2, 2], rows_per_block=5, n=12, seed=1), "twin"
        )
        storage.write_activations(acts, tmp_path / "twin.actv")
        manifest = storage.RunManifest(
            network="n/a",
            augmentation=None,
            cluster_size=12,
            confidence_threshold=0.0,
            class_index=0,
            activations=(("twin", "twin.actv"),),
        )
        storage.write_manifest(manifest, tmp_path / "manifest.json")
        rc = main(["estimate", "--manifest", str(tmp_path / "manifest.json")])
        assert rc == EXIT_OK
        assert json.loads(capsys.readouterr().out)["layers"][0]["estimated"] == 4

    def test_unknown_layer_filter_exits_2(self, tmp_path, capsys):
        path = store_layer(
            tmp_path,
            blocks_to_layer(sample_independent_blocks([2], 4, 8, seed=2), "real"),
        )
        rc = main(["estimate", path, "--layers", "ghost"])
        assert rc == EXIT_USAGE
        assert "unknown layers" in capsys.readouterr().err

    def test_missing_file_exits_2(self, capsys):
        assert main(["estimate", "no_such.actv"]) == EXIT_USAGE
        assert "error:" in capsys.readouterr().err

    def test_no_sources_exits_2(self, capsys):
        assert main(["estimate"]) == EXIT_USAGE

    def test_csv_output(self, tmp_path, capsys):
        path = store_layer(
            tmp_path, blocks_to_layer(sample_independent_blocks([3], 6, 9, seed=3), "one")
        )
        rc = main(["estimate", path, "--format", "csv"])
        assert rc == EXIT_OK
        lines = capsys.readouterr().out.strip().split("\n")
        assert lines[0].startswith("layer,")
        assert lines[1].startswith("one,9,")

    def test_log_spectrum_embedded(self, tmp_path, capsys):
        path = store_layer(
            tmp_path, blocks_to_layer(sample_independent_blocks([2], 4, 8, seed=4), "sp")
        )
        rc = main(["estimate", path, "--log-spectrum", "--concat"])
        assert rc == EXIT_OK
        row = json.loads(capsys.readouterr().out)["layers"][0]
        assert "map:0" in row["log_spectra"]
        assert "concatenated" in row["log_spectra"]


class TestPipeline:
    def test_cluster_size_one_caps_every_dimension(self, tiny_net_path, seed_image_path, capsys):
        rc = main(
            ["pipeline", seed_image_path, "--network", tiny_net_path, "--n", "1",
             "--confidence", "0"]
        )
        assert rc == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["layers"]
        for row in doc["layers"]:
            assert all(d <= 1 for d in row["per_map_dimensions"])
            assert row["cluster_size"] == 1

    def test_seed_image_rejection_exits_4(self, tiny_net_path, seed_image_path, capsys):
        rc = main(
            ["pipeline", seed_image_path, "--network", tiny_net_path, "--n", "2",
             "--confidence", "0.999999"]
        )
        assert rc == EXIT_REJECTED
        assert "error:" in capsys.readouterr().err

    def test_save_dir_round_trips_through_estimate(
        self, tiny_net_path, seed_image_path, tmp_path
    ):
        run_dir = tmp_path / "run"
        out1 = tmp_path / "direct.json"
        rc = main(
            ["pipeline", seed_image_path, "--network", tiny_net_path, "--n", "40",
             "--seed", "3", "--confidence", "0", "--save-dir", str(run_dir),
             "--output", str(out1)]
        )
        assert rc == EXIT_OK
        manifest = storage.read_manifest(run_dir / "manifest.json")
        assert manifest.cluster_size == 40
        assert manifest.augmentation["seed"] == 3
        out2 = tmp_path / "replay.json"
        rc = main(["estimate", "--manifest", str(run_dir / "manifest.json"),
                   "--output", str(out2)])
        assert rc == EXIT_OK
        assert json.loads(out1.read_text()) == json.loads(out2.read_text())

    def test_save_images_writes_ppm_cluster(self, tiny_net_path, seed_image_path, tmp_path):
        img_dir = tmp_path / "imgs"
        rc = main(
            ["pipeline", seed_image_path, "--network", tiny_net_path, "--n", "5",
             "--confidence", "0", "--save-images", str(img_dir),
             "--output", str(tmp_path / "r.json")]
        )
        assert rc == EXIT_OK
        ppms = sorted(img_dir.glob("*.ppm"))
        assert len(ppms) == 5
        first = storage.read_image(ppms[0])
        assert first.shape == (16, 16, 3)
        meta = json.loads((img_dir / "cluster.json").read_text())
        assert meta["image_count"] == 5
        assert meta["augmentation"]["method"] == "gaussian_noise"

    def test_layer_filter(self, tiny_net_path, seed_image_path, capsys):
        rc = main(
            ["pipeline", seed_image_path, "--network", tiny_net_path, "--n", "10",
             "--confidence", "0", "--layers", "conv2,fc1"]
        )
        assert rc == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert [row["layer"] for row in doc["layers"]] == ["conv2", "fc1"]

    def test_worker_count_does_not_change_output(
        self, tiny_net_path, seed_image_path, tmp_path, monkeypatch
    ):
        outs = []
        for threads in ("1", "3"):
            monkeypatch.setenv("DEEPDIM_THREADS", threads)
            out = tmp_path / f"t{threads}.json"
            rc = main(
                ["pipeline", seed_image_path, "--network", tiny_net_path, "--n", "60",
                 "--seed", "5", "--confidence", "0", "--output", str(out)]
            )
            assert rc == EXIT_OK
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_crop_method_needs_viable_strip(self, tiny_net_path, seed_image_path, capsys):
        # default strip bound (10) exhausts a 16x16 image
        rc = main(
            ["pipeline", seed_image_path, "--network", tiny_net_path, "--n", "4",
             "--confidence", "0", "--method", "crop"]
        )
        assert rc == EXIT_USAGE
        assert "exhaust" in capsys.readouterr().err


class TestAugmentCommand:
    def test_writes_cluster(self, seed_image_path, tmp_path, capsys):
        out_dir = tmp_path / "cluster"
        rc = main(
            ["augment", seed_image_path, "--out", str(out_dir), "--n", "6",
             "--method", "rotation", "--seed", "2"]
        )
        assert rc == EXIT_OK
        assert len(sorted(out_dir.glob("*.ppm"))) == 6
        meta = json.loads((out_dir / "cluster.json").read_text())
        assert meta["augmentation"]["seed"] == 2


class TestSpectrumCommand:
    def test_rank_two_map(self, tmp_path, capsys):
        blocks = sample_independent_blocks([2], rows_per_block=6, n=10, seed=8)
        path = store_layer(tmp_path, blocks_to_layer(blocks, "r2"))
        rc = main(["spectrum", path, "--map", "0"])
        assert rc == EXIT_OK
        lines = capsys.readouterr().out.strip().split("\n")
        assert lines[0] == "index,sigma,log10_sigma"
        rows = [line.split(",") for line in lines[1:]]
        sigmas = [float(r[1]) for r in rows]
        assert sigmas == sorted(sigmas, reverse=True)
        significant = [s for s in sigmas if s > 1e-9 * sigmas[0]]
        assert len(significant) == 2

    def test_json_format(self, tmp_path, capsys):
        blocks = sample_independent_blocks([2], rows_per_block=6, n=10, seed=8)
        path = store_layer(tmp_path, blocks_to_layer(blocks, "r2"))
        rc = main(["spectrum", path, "--format", "json"])
        assert rc == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["layer"] == "r2"
        assert [row[0] for row in doc["rows"]] == list(range(1, 7))

    def test_map_out_of_range_exits_2(self, tmp_path, capsys):
        blocks = sample_independent_blocks([2], rows_per_block=6, n=10, seed=8)
        path = store_layer(tmp_path, blocks_to_layer(blocks, "r2"))
        assert main(["spectrum", path, "--map", "9"]) == EXIT_USAGE


class TestCheckedInNetworks:
    def test_tiny3_matches_builder(self):
        assert forward.read_network(REPO_ROOT / "networks/tiny3.json") == tiny_network()

    def test_vgg19_matches_builder(self):
        assert forward.read_network(REPO_ROOT / "networks/vgg19.json") == forward.vgg19_spec()
