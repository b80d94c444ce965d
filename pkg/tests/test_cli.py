import json
import sys

import pytest

from caplab.cli import main
from caplab.corpus import load_manifest, read_records

from fault_sim import build_dataset


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


class TestAnnotateCli:
    def test_plan_run_finalize_with_mock_backend(self, tmp_path, capsys):
        build_dataset(tmp_path / "data", 2, 3)
        job_dir = str(tmp_path / "job")
        code, out = run_cli(
            capsys,
            "annotate", "plan",
            "--dataset", str(tmp_path / "data"),
            "--job-dir", job_dir,
            "--task-id", "demo",
            "--mode", "recaption",
        )
        assert code == 0
        assert "2 shards pending" in out

        code, out = run_cli(
            capsys, "annotate", "run", "--job-dir", job_dir, "--workers", "2", "--mock"
        )
        assert code == 0
        assert "2 shards done" in out

        code, out = run_cli(capsys, "annotate", "finalize", "--job-dir", job_dir)
        assert code == 0
        manifest = load_manifest(tmp_path / "job" / "out" / "manifest.json")
        assert manifest.total_samples == 6
        records = list(read_records(tmp_path / "job" / "out" / manifest.shards[0].path))
        assert all(r.mode == "recaption" for r in records)


class TestStatsCli:
    def test_report_written_to_file(self, tmp_path, capsys):
        from caplab.corpus import CaptionRecord, write_records

        records = [
            CaptionRecord(
                sample_id=f"s{i}",
                caption_text="a small red barn in a field",
                captioner_id="m",
                mode="caption",
                created_at="2026-01-01T00:00:00+00:00",
            )
            for i in range(4)
        ]
        write_records(records, tmp_path / "data" / "a.jsonl")
        out_path = tmp_path / "report.json"
        code, _ = run_cli(
            capsys,
            "stats", "--dataset", str(tmp_path / "data"), "--out", str(out_path),
        )
        assert code == 0
        report = json.loads(out_path.read_text())
        assert report["sample_count"] == 4
        assert report["avg_len"] == pytest.approx(7.0)
        assert report["tagger_id"] == "lexicon-en-v1"


class TestEvalCli:
    def test_anls_over_jsonl_files(self, tmp_path, capsys):
        (tmp_path / "pred.jsonl").write_text(
            '{"text": "hello"}\n{"text": "helo"}\n{"text": "abc"}\n'
        )
        (tmp_path / "ref.jsonl").write_text(
            '{"text": "hello"}\n{"text": "hello"}\n{"text": "xyz"}\n'
        )
        code, out = run_cli(
            capsys,
            "eval", "anls", "--pred", str(tmp_path / "pred.jsonl"),
            "--ref", str(tmp_path / "ref.jsonl"),
        )
        assert code == 0
        assert json.loads(out)["mean"] == pytest.approx(0.6)

    def test_judge_against_live_endpoint(self, tmp_path, capsys):
        import json as _json
        import threading
        from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

        class JudgeHandler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                self.rfile.read(length)
                data = _json.dumps({"text": "score: 4/5"}).encode()
                self.send_response(200)
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, fmt, *args):
                pass

        server = ThreadingHTTPServer(("127.0.0.1", 0), JudgeHandler)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        try:
            (tmp_path / "c.jsonl").write_text('{"text": "a cat"}\n{"text": "a dog"}\n')
            (tmp_path / "r.jsonl").write_text('{"text": "cat ref"}\n{"text": "dog ref"}\n')
            code, out = run_cli(
                capsys,
                "eval", "judge",
                "--candidates", str(tmp_path / "c.jsonl"),
                "--refs", str(tmp_path / "r.jsonl"),
                "--endpoint", f"http://127.0.0.1:{server.server_address[1]}/",
            )
            assert code == 0
            payload = json.loads(out)
            assert payload["mean_rescaled"] == pytest.approx(80.0)
            assert payload["n"] == 2
        finally:
            server.shutdown()

    def test_gsb_with_gold(self, tmp_path, capsys):
        judgments = [
            {"pair_id": f"p{i}", "verdict": v}
            for i, v in enumerate(["G", "G", "S", "B"])
        ]
        (tmp_path / "j.jsonl").write_text(
            "\n".join(json.dumps(j) for j in judgments) + "\n"
        )
        (tmp_path / "gold.json").write_text(json.dumps({"p0": "G", "p3": "B"}))
        code, out = run_cli(
            capsys,
            "eval", "gsb", "--judgments", str(tmp_path / "j.jsonl"),
            "--gold", str(tmp_path / "gold.json"),
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["win_plus_tie"] == pytest.approx(0.75)
        assert payload["gold"]["accuracy"] == 1.0


class TestMixCli:
    def _mixture_file(self, tmp_path):
        spec = {
            "groups": [
                {"name": "document_vqa", "datasets": ["d1"], "weight": "2", "repeat_factor": 1},
                {"name": "pure_text", "datasets": ["d2"], "weight": "1", "repeat_factor": 1},
            ],
            "total_budget": 1000,
        }
        path = tmp_path / "mix.json"
        path.write_text(json.dumps(spec))
        return path

    def test_compose_with_command_oracle(self, tmp_path, capsys):
        mix_path = self._mixture_file(tmp_path)
        oracle = (
            f"{sys.executable} -c \"import json,sys; d=json.load(sys.stdin); "
            "w={g['name']: g['weight'] for g in d['mixture']['groups']}; "
            "from fractions import Fraction; "
            "print(1 - float(Fraction(w['document_vqa'])))\""
        )
        code, out = run_cli(
            capsys,
            "mix", "compose", "--mixture", str(mix_path), "--k", "100",
            "--oracle-cmd", oracle, "--max-passes", "2",
        )
        assert code == 0
        payload = json.loads(out)
        weights = {g["name"]: g["weight"] for g in payload["mixture"]["groups"]}
        assert weights["document_vqa"] == "1/2"  # halved twice from 2
        assert weights["pure_text"] == "1"

    def test_plan_validates_stage_order(self, tmp_path, capsys):
        stages = {
            "stages": [
                {
                    "name": "knowledge",
                    "budget": 21,
                    "quality": {"difficulty": 1.9, "complexity": 2.44, "relevance": 3.94},
                    "mixture": {
                        "groups": [{"name": "a", "datasets": [], "weight": "1"}],
                        "total_budget": 21,
                    },
                },
                {
                    "name": "instruction",
                    "budget": 12,
                    "quality": {"difficulty": 2.15, "complexity": 2.62, "relevance": 4.45},
                    "mixture": {
                        "groups": [{"name": "a", "datasets": [], "weight": "1"}],
                        "total_budget": 12,
                    },
                },
            ]
        }
        (tmp_path / "stages.json").write_text(json.dumps(stages))
        code, out = run_cli(capsys, "mix", "plan", "--stages", str(tmp_path / "stages.json"))
        assert code == 0
        assert "knowledge -> instruction" in out


class TestMixSubsetCli:
    def test_subset_writes_manifest_and_shards(self, tmp_path, capsys):
        from caplab.corpus import CaptionSample, write_shard

        samples = [
            CaptionSample(
                sample_id=f"s{i}",
                image_ref=f"img://{i}",
                source_dataset="web" if i % 2 else "scan",
                language="EN",
            )
            for i in range(20)
        ]
        write_shard(samples, tmp_path / "data" / "all.jsonl")
        code, out = run_cli(
            capsys,
            "mix", "subset", "--dataset", str(tmp_path / "data"), "--k", "10",
            "--strata-key", "source_dataset", "--seed", "4", "--out", str(tmp_path / "sub"),
        )
        assert code == 0
        subset = load_manifest(tmp_path / "sub" / "manifest.json")
        assert subset.total_samples == 10
        assert {s.shard_id for s in subset.shards} == {"web", "scan"}
        assert all(s.sample_count == 5 for s in subset.shards)


class TestMixRankcheckCli:
    def test_rankcheck_reports_min_rho(self, tmp_path, capsys):
        scores = {
            "d1": {"1000": 10.0, "10000": 20.0},
            "d2": {"1000": 12.0, "10000": 22.0},
        }
        (tmp_path / "scores.json").write_text(json.dumps(scores))
        code, out = run_cli(
            capsys, "mix", "rankcheck", "--scores", str(tmp_path / "scores.json")
        )
        assert code == 0
        assert json.loads(out)["min_rho"] == pytest.approx(1.0)


class TestEvalsvcCli:
    def test_create_then_report(self, tmp_path, capsys):
        pairs = {
            "pairs": [
                {
                    "pair_id": f"p{i}",
                    "image_ref": f"img://{i}",
                    "caption_left": "left text",
                    "caption_right": "right text",
                }
                for i in range(3)
            ]
        }
        (tmp_path / "pairs.json").write_text(json.dumps(pairs))
        code, out = run_cli(
            capsys,
            "evalsvc", "create", "--pairs", str(tmp_path / "pairs.json"),
            "--rater", "alice", "--gold-fraction", "0",
            "--data", str(tmp_path / "svc"),
        )
        assert code == 0
        task_id = out.strip()

        from caplab.evalsvc import EvalService

        service = EvalService(tmp_path / "svc")
        item = service.next_item(task_id, "alice")
        service.submit(task_id, "alice", item.pair_id, 4, 4, "same", token="t1")
        service.close()

        code, out = run_cli(
            capsys, "evalsvc", "report", "--task", task_id, "--data", str(tmp_path / "svc")
        )
        assert code == 0
        assert json.loads(out)["gsb"]["total"] == 1


class TestScalingCli:
    def test_fit_emits_json_and_csv(self, tmp_path, capsys):
        import math

        lines = [
            json.dumps({"data_size": math.e**k, "score": 2.0 * k + 1.0}) for k in range(4)
        ]
        (tmp_path / "points.jsonl").write_text("\n".join(lines) + "\n")
        code, out = run_cli(
            capsys,
            "scaling", "fit", "--points", str(tmp_path / "points.jsonl"),
            "--out", str(tmp_path / "fit.json"), "--csv", str(tmp_path / "curve.csv"),
        )
        assert code == 0
        fit = json.loads((tmp_path / "fit.json").read_text())
        assert fit["a"] == pytest.approx(2.0)
        csv_lines = (tmp_path / "curve.csv").read_text().strip().splitlines()
        assert csv_lines[0] == "data_size,score,fitted"
        assert len(csv_lines) == 5


class TestPackCli:
    def test_bench_reports_waste_reduction(self, capsys):
        code, out = run_cli(
            capsys,
            "pack", "bench", "--capacity", "4096", "--dist", "lognormal:5,1",
            "--n", "2000", "--seed", "3",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["packed_waste"] <= 0.5 * payload["naive_waste"]
        assert payload["n_sequences"] == 2000
