import hashlib
import io
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient

from brightcolor.colorspace import decode_image_array, encode_png, rgb_to_lab
from brightcolor.data import make_scene
from brightcolor.quantizer import gamut_hash
from brightcolor.service import create_app


@pytest.fixture(scope="module")
def app(tiny_checkpoint):
    return create_app(model_path=str(tiny_checkpoint), max_side=256)


@pytest.fixture(scope="module")
def client(app):
    return TestClient(app)


@pytest.fixture(scope="module")
def scene_png():
    return encode_png(make_scene(21, 48))


def decode_response(resp):
    import cv2

    raw = cv2.imdecode(np.frombuffer(resp.content, np.uint8), cv2.IMREAD_UNCHANGED)
    return decode_image_array(raw)


class TestHealth:
    def test_unloaded_service_reports_503(self):
        bare = TestClient(create_app())
        assert bare.get("/api/health").status_code == 503

    def test_loaded_service_reports_model(self, client):
        resp = client.get("/api/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["model_id"]
        assert body["gamut_hash"] == gamut_hash()


class TestEnhance:
    def test_default_enhancement(self, client, scene_png):
        resp = client.post("/api/enhance", files={"image": ("in.png", scene_png, "image/png")})
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        assert resp.headers["X-Omega"] == "0"
        assert resp.headers["X-Gamma"] == "0"
        assert resp.headers["X-Reference"] == "false"
        out = decode_response(resp)
        assert out.shape == (48, 48, 3)

    def test_omega_echoed_and_output_differs(self, client, scene_png):
        plain = client.post("/api/enhance", files={"image": ("in.png", scene_png, "image/png")})
        tuned = client.post(
            "/api/enhance",
            files={"image": ("in.png", scene_png, "image/png")},
            data={"omega": "0.5"},
        )
        assert tuned.status_code == 200
        assert tuned.headers["X-Omega"] == "0.5"
        assert tuned.content != plain.content

    def test_gamma_without_reference_422(self, client, scene_png):
        resp = client.post(
            "/api/enhance",
            files={"image": ("in.png", scene_png, "image/png")},
            data={"gamma": "0.7"},
        )
        assert resp.status_code == 422

    def test_reference_defaults_gamma(self, client, scene_png):
        ref_png = encode_png(make_scene(22, 48))
        resp = client.post(
            "/api/enhance",
            files={
                "image": ("in.png", scene_png, "image/png"),
                "reference": ("ref.png", ref_png, "image/png"),
            },
        )
        assert resp.status_code == 200
        assert resp.headers["X-Gamma"] == "0.7"
        assert resp.headers["X-Reference"] == "true"

    def test_malformed_image_400(self, client):
        resp = client.post("/api/enhance", files={"image": ("x.png", b"junk", "image/png")})
        assert resp.status_code == 400

    def test_malformed_numeric_field_400(self, client, scene_png):
        resp = client.post(
            "/api/enhance",
            files={"image": ("in.png", scene_png, "image/png")},
            data={"omega": "not-a-number"},
        )
        assert resp.status_code == 400

    def test_oversize_image_413(self, client):
        big = encode_png(np.zeros((300, 300, 3), np.float32))
        resp = client.post("/api/enhance", files={"image": ("big.png", big, "image/png")})
        assert resp.status_code == 413

    def test_no_model_503(self, scene_png):
        bare = TestClient(create_app())
        resp = bare.post("/api/enhance", files={"image": ("in.png", scene_png, "image/png")})
        assert resp.status_code == 503


class TestDeterminismAndInvariants:
    def test_repeated_requests_byte_identical(self, client, scene_png):
        payload = {"files": {"image": ("in.png", scene_png, "image/png")}}
        first = client.post("/api/enhance", **payload)
        second = client.post("/api/enhance", **payload)
        assert first.content == second.content

    def test_lightness_invariant_over_the_wire(self, client, scene_png):
        planes = []
        for omega in ("0", "0.5", "1"):
            resp = client.post(
                "/api/enhance",
                files={"image": ("in.png", scene_png, "image/png")},
                data={"omega": omega},
            )
            out = decode_response(resp)
            planes.append(rgb_to_lab(out).L)
        # The predicted L plane is bit-identical across omega (checked at the
        # model level); over the wire it is re-extracted from 8-bit RGB, whose
        # half-step quantization moves L by up to ~0.5 per response.
        assert np.abs(planes[0] - planes[1]).max() <= 1.0
        assert np.abs(planes[0] - planes[2]).max() <= 1.0
        assert np.abs(planes[0] - planes[1]).mean() <= 0.2


class TestReload:
    def test_reload_reports_model_id(self, tiny_checkpoint):
        client = TestClient(create_app(model_path=str(tiny_checkpoint)))
        first_id = client.get("/api/health").json()["model_id"]
        resp = client.post("/api/reload", data={"path": str(tiny_checkpoint)})
        assert resp.status_code == 200
        assert client.get("/api/health").json()["model_id"] == first_id

    def test_corrupt_reload_keeps_old_model(self, tiny_checkpoint, tmp_path):
        bad = tmp_path / "bad.pt"
        bad.write_bytes(b"broken")
        client = TestClient(create_app(model_path=str(tiny_checkpoint)))
        old_id = client.get("/api/health").json()["model_id"]
        resp = client.post("/api/reload", data={"path": str(bad)})
        assert resp.status_code == 400
        assert client.get("/api/health").json()["model_id"] == old_id

    def test_concurrent_requests_during_swap_consistent(
        self, tiny_checkpoint, scene_png, tmp_path
    ):
        import shutil

        copy = tmp_path / "copy.pt"
        shutil.copyfile(tiny_checkpoint, copy)
        client = TestClient(create_app(model_path=str(tiny_checkpoint)))

        def enhance_once(_):
            resp = client.post(
                "/api/enhance", files={"image": ("in.png", scene_png, "image/png")}
            )
            assert resp.status_code == 200
            return resp.headers["X-Model-Id"], hashlib.sha256(resp.content).hexdigest()

        def swap(_):
            client.post("/api/reload", data={"path": str(copy)})

        with ThreadPoolExecutor(max_workers=4) as pool:
            futures = [pool.submit(enhance_once, i) for i in range(12)]
            futures += [pool.submit(swap, i) for i in range(3)]
            results = [f.result() for f in futures[:12]]

        by_model: dict[str, set] = {}
        for model_id, digest in results:
            by_model.setdefault(model_id, set()).add(digest)
        # same input on one model must give one byte-identical answer
        for digests in by_model.values():
            assert len(digests) == 1
