from __future__ import annotations

import json

import pytest
import requests

from qds.annotation import (
    AnnotationServer,
    AnnotationService,
    LabelStore,
    likert_tasks_from_records,
    quality_tasks_from_triples,
)
from qds.errors import PortInUseError
from qds.gateway import Verdict
from qds.synthesis import FilterTrace, QdsTriple


def make_triples(n):
    return [
        QdsTriple(
            pair_id=f"p{i:03d}",
            query=f"What is item {i}?",
            query_summary=f"answer {i}",
            provenance=FilterTrace(candidate_rank=0, answerability_votes=(Verdict.YES, Verdict.YES)),
        )
        for i in range(n)
    ]


def make_likert_rows(n_dialogues=3, systems=("sysA", "sysB")):
    rows = []
    for d in range(n_dialogues):
        for s, system in enumerate(systems):
            rows.append(
                {
                    "item_id": f"dlg{d}-s{s}",
                    "dialogue_id": f"dlg{d}",
                    "dialogue": f"A: dialogue {d}",
                    "summary": f"summary {d} by {s}",
                    "system": system,
                }
            )
    return rows


@pytest.fixture
def quality_service(tmp_path):
    store = LabelStore(tmp_path / "labels.jsonl")
    tasks = quality_tasks_from_triples(make_triples(4), {"p000": "A: hello"})
    return AnnotationService(tasks, store)


class TestService:
    def test_next_task_is_lowest_unlabeled(self, quality_service):
        task = quality_service.next_task("ann1")
        assert task.task_id == "p000#0"
        assert task.payload["dialogue"] == "A: hello"
        assert [q for q, _ in task.questions] == ["answerable", "unique", "correct"]

    def test_submission_advances_queue(self, quality_service):
        answers = {"answerable": "yes", "unique": "yes", "correct": "no"}
        quality_service.submit("p000#0", "ann1", answers)
        assert quality_service.next_task("ann1").task_id == "p001#0"
        # other annotators still start at the beginning
        assert quality_service.next_task("ann2").task_id == "p000#0"

    def test_done_after_all_labeled(self, quality_service):
        answers = {"answerable": "yes", "unique": "yes", "correct": "yes"}
        for i in range(4):
            quality_service.submit(f"p{i:03d}#0", "ann1", answers)
        assert quality_service.next_task("ann1") is None

    def test_task_never_reappears_after_submission(self, quality_service):
        answers = {"answerable": "no", "unique": "no", "correct": "no"}
        seen = []
        while (task := quality_service.next_task("ann1")) is not None:
            assert task.task_id not in seen
            seen.append(task.task_id)
            quality_service.submit(task.task_id, "ann1", answers)
        assert len(seen) == 4

    def test_likert_order_is_shuffled_per_annotator_but_stable(self, tmp_path):
        tasks, systems = likert_tasks_from_records(make_likert_rows(n_dialogues=1, systems=tuple(f"s{i}" for i in range(6))))
        service = AnnotationService(tasks, LabelStore(tmp_path / "l.jsonl"), systems)

        def order(annotator):
            ids = []
            store = service.store.latest
            # walk the queue without labeling by inspecting the internal order
            return [t.task_id for t in service._queue_for(annotator)]

        assert order("alice") == order("alice")
        orders = {tuple(order(f"ann{i}")) for i in range(8)}
        assert len(orders) > 1  # some annotators see different orders
        assert all(sorted(o) == sorted(orders.pop()) for o in [min(orders)] if orders)

    def test_resubmission_replaces_and_audits(self, quality_service, tmp_path):
        answers_a = {"answerable": "yes", "unique": "yes", "correct": "yes"}
        answers_b = {"answerable": "no", "unique": "no", "correct": "no"}
        assert quality_service.submit("p000#0", "ann1", answers_a) is False
        assert quality_service.submit("p000#0", "ann1", answers_b) is True
        log_lines = [
            json.loads(line)
            for line in open(quality_service.store.path, encoding="utf-8")
            if line.strip()
        ]
        assert len(log_lines) == 2  # append-only audit trail
        assert log_lines[1]["replaced"] is True
        report = quality_service.report()
        assert report["quality_review"]["n_labels"] == 1
        assert report["quality_review"]["yes_percent"]["answerable"] == 0.0


class TestValidation:
    def test_unknown_task(self, quality_service):
        from qds.annotation import UnknownTask

        with pytest.raises(UnknownTask):
            quality_service.submit("nope", "ann1", {})

    def test_incomplete_answers_rejected(self, quality_service):
        from qds.annotation import ValidationFailure

        with pytest.raises(ValidationFailure) as err:
            quality_service.submit("p000#0", "ann1", {"answerable": "yes"})
        assert err.value.field == "unique"

    def test_likert_range_enforced(self, tmp_path):
        from qds.annotation import ValidationFailure

        tasks, systems = likert_tasks_from_records(make_likert_rows())
        service = AnnotationService(tasks, LabelStore(tmp_path / "l.jsonl"), systems)
        task = service.next_task("ann1")
        good = {"faithfulness": 4, "fluency": 5, "informativeness": 3, "conciseness": 5}
        service.submit(task.task_id, "ann1", good)
        bad = dict(good, faithfulness=6)
        with pytest.raises(ValidationFailure) as err:
            service.submit(service.next_task("ann1").task_id, "ann1", bad)
        assert err.value.field == "faithfulness"
        assert "out of range" in str(err.value)


class TestReport:
    def test_quality_percentages_and_conjunction(self, quality_service):
        # 4 labels: answerable yes on 3/4; unique+correct both yes on 2/4
        rows = [
            ("p000#0", {"answerable": "yes", "unique": "yes", "correct": "yes"}),
            ("p001#0", {"answerable": "yes", "unique": "yes", "correct": "yes"}),
            ("p002#0", {"answerable": "yes", "unique": "no", "correct": "yes"}),
            ("p003#0", {"answerable": "no", "unique": "yes", "correct": "no"}),
        ]
        for task_id, answers in rows:
            quality_service.submit(task_id, "ann1", answers)
        report = quality_service.report()["quality_review"]
        assert report["yes_percent"]["answerable"] == 75.0
        assert report["yes_percent"]["unique"] == 75.0
        assert report["yes_percent"]["correct"] == 75.0
        assert report["both_unique_and_correct_percent"] == 50.0
        assert report["annotators_per_item"] == 1.0

    def test_likert_per_system_mean_std(self, tmp_path):
        tasks, systems = likert_tasks_from_records(make_likert_rows(n_dialogues=1))
        service = AnnotationService(tasks, LabelStore(tmp_path / "l.jsonl"), systems)
        # sysA gets 5s and 3s; sysB gets 4s
        service.submit("dlg0-s0", "a1", {"faithfulness": 5, "fluency": 5, "informativeness": 5, "conciseness": 5})
        service.submit("dlg0-s0", "a2", {"faithfulness": 3, "fluency": 3, "informativeness": 3, "conciseness": 3})
        service.submit("dlg0-s1", "a1", {"faithfulness": 4, "fluency": 4, "informativeness": 4, "conciseness": 4})
        report = service.report()["likert"]
        assert report["per_system"]["sysA"]["faithfulness"]["mean"] == pytest.approx(4.0)
        assert report["per_system"]["sysA"]["faithfulness"]["std"] == pytest.approx(1.0)
        assert report["per_system"]["sysB"]["fluency"]["mean"] == pytest.approx(4.0)
        assert report["annotators_per_item"] == pytest.approx(3 / 2)

    def test_report_is_pure_function_of_log(self, quality_service, tmp_path):
        answers = {"answerable": "yes", "unique": "no", "correct": "yes"}
        quality_service.submit("p000#0", "ann1", answers)
        quality_service.submit("p001#0", "ann2", answers)
        before = quality_service.report()
        # rebuild everything from the log file alone
        store2 = LabelStore(quality_service.store.path)
        service2 = AnnotationService(list(quality_service.ordered), store2)
        assert service2.report() == before


@pytest.fixture
def http_server(tmp_path):
    store = LabelStore(tmp_path / "labels.jsonl")
    tasks = quality_tasks_from_triples(make_triples(3))
    likert, systems = likert_tasks_from_records(make_likert_rows())
    service = AnnotationService(tasks + likert, store, systems)
    server = AnnotationServer(service, port=0, token="sekrit")
    server.start_background()
    yield server
    server.shutdown()


def api(server, path):
    return f"http://127.0.0.1:{server.port}{path}"


AUTH = {"X-Annotation-Token": "sekrit"}


class TestHttpApi:
    def test_items_stubs(self, http_server):
        response = requests.get(api(http_server, "/api/items"), headers=AUTH, timeout=5)
        assert response.status_code == 200
        items = response.json()["items"]
        assert len(items) == 9  # 3 quality + 6 likert
        assert set(items[0]) == {"task_id", "kind"}

    def test_unauthorized_without_token(self, http_server):
        response = requests.get(api(http_server, "/api/next?annotator=a"), timeout=5)
        assert response.status_code == 401
        assert response.json()["error"] == "UNAUTHORIZED"

    def test_next_submit_cycle(self, http_server):
        response = requests.get(api(http_server, "/api/next?annotator=a1"), headers=AUTH, timeout=5)
        task = response.json()["task"]
        assert task["kind"] == "quality_review"
        answers = {"answerable": "yes", "unique": "yes", "correct": "yes"}
        post = requests.post(
            api(http_server, "/api/label"),
            json={"task_id": task["task_id"], "annotator_id": "a1", "answers": answers},
            headers=AUTH,
            timeout=5,
        )
        assert post.status_code == 200
        assert post.json() == {"ok": True, "replaced": False}
        again = requests.get(api(http_server, "/api/next?annotator=a1"), headers=AUTH, timeout=5)
        assert again.json()["task"]["task_id"] != task["task_id"]

    def test_validation_error_payload(self, http_server):
        post = requests.post(
            api(http_server, "/api/label"),
            json={
                "task_id": "dlg0-s0",
                "annotator_id": "a1",
                "answers": {"faithfulness": 6, "fluency": 5, "informativeness": 3, "conciseness": 5},
            },
            headers=AUTH,
            timeout=5,
        )
        assert post.status_code == 400
        body = post.json()
        assert body["error"] == "VALIDATION_ERROR"
        assert body["field"] == "faithfulness"

    def test_unknown_task_404(self, http_server):
        post = requests.post(
            api(http_server, "/api/label"),
            json={"task_id": "ghost", "annotator_id": "a1", "answers": {}},
            headers=AUTH,
            timeout=5,
        )
        assert post.status_code == 404
        assert post.json()["error"] == "UNKNOWN_TASK"

    def test_blindness_no_system_identity_in_responses(self, http_server):
        systems = {"sysA", "sysB"}
        crawled = [requests.get(api(http_server, "/api/items"), headers=AUTH, timeout=5).json()]
        for annotator in ("b1", "b2"):
            while True:
                body = requests.get(
                    api(http_server, f"/api/next?annotator={annotator}"), headers=AUTH, timeout=5
                ).json()
                crawled.append(body)
                if body.get("done"):
                    break
                task = body["task"]
                if task["kind"] == "likert_eval":
                    answers = {"faithfulness": 3, "fluency": 3, "informativeness": 3, "conciseness": 3}
                else:
                    answers = {"answerable": "yes", "unique": "yes", "correct": "yes"}
                crawled.append(
                    requests.post(
                        api(http_server, "/api/label"),
                        json={"task_id": task["task_id"], "annotator_id": annotator, "answers": answers},
                        headers=AUTH,
                        timeout=5,
                    ).json()
                )
        blob = json.dumps(crawled)
        for name in systems:
            assert name not in blob
        for payload in crawled:
            task = payload.get("task")
            if task:
                assert "system" not in task
                assert "system" not in task["payload"]

    def test_report_has_no_item_to_system_mapping(self, http_server):
        answers = {"faithfulness": 4, "fluency": 4, "informativeness": 4, "conciseness": 4}
        requests.post(
            api(http_server, "/api/label"),
            json={"task_id": "dlg0-s0", "annotator_id": "r1", "answers": answers},
            headers=AUTH,
            timeout=5,
        )
        report = requests.get(api(http_server, "/api/report"), headers=AUTH, timeout=5).json()
        blob = json.dumps(report)
        assert "dlg0-s0" not in blob  # no item ids in the aggregate report
        assert "sysA" in blob  # per-system aggregates are the report's purpose

    def test_durability_across_restart(self, http_server, tmp_path):
        answers = {"answerable": "yes", "unique": "yes", "correct": "no"}
        requests.post(
            api(http_server, "/api/label"),
            json={"task_id": "p000#0", "annotator_id": "d1", "answers": answers},
            headers=AUTH,
            timeout=5,
        )
        report_before = requests.get(api(http_server, "/api/report"), headers=AUTH, timeout=5).json()
        label_path = http_server.service.store.path
        http_server.shutdown()

        store = LabelStore(label_path)
        tasks = quality_tasks_from_triples(make_triples(3))
        likert, systems = likert_tasks_from_records(make_likert_rows())
        service = AnnotationService(tasks + likert, store, systems)
        assert service.report() == report_before
        assert store.latest[("p000#0", "d1")].answers == answers

    def test_static_fallback_page(self, http_server):
        response = requests.get(api(http_server, "/"), timeout=5)
        assert response.status_code == 200
        assert "Annotation server" in response.text

    def test_static_dir_serving_and_traversal_guard(self, tmp_path):
        static = tmp_path / "static"
        static.mkdir()
        (static / "index.html").write_text("<html>studio</html>")
        (static / "app.js").write_text("console.log('ok')")
        store = LabelStore(tmp_path / "labels.jsonl")
        service = AnnotationService(quality_tasks_from_triples(make_triples(1)), store)
        server = AnnotationServer(service, port=0, static_dir=static)
        server.start_background()
        try:
            base = f"http://127.0.0.1:{server.port}"
            index = requests.get(f"{base}/", timeout=5)
            assert index.status_code == 200 and "studio" in index.text
            script = requests.get(f"{base}/app.js", timeout=5)
            assert script.status_code == 200
            assert "javascript" in script.headers["Content-Type"]
            # requests normalizes "..", so send the raw path to hit the guard
            import http.client

            conn = http.client.HTTPConnection("127.0.0.1", server.port, timeout=5)
            conn.request("GET", "/../labels.jsonl")
            assert conn.getresponse().status == 404
            conn.close()
            missing = requests.get(f"{base}/nope.css", timeout=5)
            assert missing.status_code == 404
        finally:
            server.shutdown()

    def test_port_in_use(self, http_server, tmp_path):
        store = LabelStore(tmp_path / "other.jsonl")
        service = AnnotationService(quality_tasks_from_triples(make_triples(1)), store)
        with pytest.raises(PortInUseError):
            AnnotationServer(service, port=http_server.port)
