#!/usr/bin/env python3
"""Checks that every document the sitewatch tool reads or writes conforms to
the JSON schemas under schemas/.

usage: check_schemas.py <sitewatch binary> <repo root>
"""

import json
import re
import signal
import socket
import subprocess
import sys
import tempfile
from pathlib import Path

from jsonschema import Draft202012Validator

failures = 0


def load_schemas(root):
    out = {}
    for p in sorted((root / "schemas").glob("*.schema.json")):
        schema = json.loads(p.read_text())
        Draft202012Validator.check_schema(schema)
        out[p.name.removesuffix(".schema.json")] = Draft202012Validator(schema)
    return out


def check(validator, doc, where):
    global failures
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        failures += 1
        print(f"FAIL {where}: {errors[0].message} at {list(errors[0].path)}")


def expect_invalid(validator, doc, where):
    global failures
    if validator.is_valid(doc):
        failures += 1
        print(f"FAIL {where}: document should have been rejected")


def jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def run(*args):
    subprocess.run([str(a) for a in args], check=True, stdout=subprocess.DEVNULL)


class LineClient:
    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=10)
        self.buf = b""

    def send(self, msg):
        self.sock.sendall((json.dumps(msg) + "\n").encode())

    def read(self):
        while b"\n" not in self.buf:
            chunk = self.sock.recv(65536)
            if not chunk:
                raise RuntimeError("connection closed")
            self.buf += chunk
        line, self.buf = self.buf.split(b"\n", 1)
        return json.loads(line)


def check_run_log(s, lines):
    check(s["runlog_header"], lines[0], "run log header")
    check(s["topology"], lines[0]["topology"], "run log header topology")
    for i, e in enumerate(lines[1:]):
        check(s["runlog_entry"], e, f"run log line {i + 2}")
        if e["seq"] != i:
            raise RuntimeError(f"run log seq {e['seq']} at position {i}")
        if e["type"] == "config":
            check(s["config"], e["config"], f"config entry on line {i + 2}")
    return lines[1:]


def check_control_api(binary, root, s, tmp, clip_dir):
    proc = subprocess.Popen([str(binary), "serve", "--listen", "127.0.0.1:0", "--topology",
                             str(root / "data" / "topology.json")],
                            stderr=subprocess.PIPE, text=True)
    try:
        port = None
        for line in proc.stderr:
            m = re.search(r"line JSON\) on [^:]+:(\d+)", line)
            if m:
                port = int(m.group(1))
                break
        if port is None:
            raise RuntimeError("serve did not report its port")
        client = LineClient(port)

        requests = [
            {"request_id": 1, "kind": "get_config"},
            {"request_id": "m", "kind": "set_mode", "payload": {"mode": "Reactive"}},
            {"request_id": "z", "kind": "set_zone",
             "payload": {"node_id": "cam1", "polygon": [[0, 0], [1, 0], [1, 1], [0, 1]]}},
            {"request_id": "c", "kind": "set_config", "payload": {"min_quality": 0.4}},
            {"request_id": "p", "kind": "frame_preview", "payload": {"node_id": "cam1"}},
            {"request_id": "x", "kind": "stop_run"},
            {"request_id": "bad", "kind": "set_mode", "payload": {"mode": "Eager"}},
        ]
        for req in requests:
            if req["request_id"] != "bad":
                check(s["control_request"], req, f"request {req['kind']}")
            client.send(req)
            reply = client.read()
            check(s["control_stream"], reply, f"reply to {req['kind']}")
            if req["request_id"] == "bad":
                if reply.get("ok") is not False:
                    raise RuntimeError("invalid mode was accepted")
            elif reply.get("ok") is not True:
                raise RuntimeError(f"{req['kind']} failed: {reply}")
            if "config" in reply.get("result", {}):
                check(s["config"], reply["result"]["config"], f"config in reply to {req['kind']}")
        expect_invalid(s["control_request"], requests[-1], "request with unknown mode")
        expect_invalid(s["control_request"], {"request_id": 1, "kind": "reboot"}, "request with unknown kind")

        sub = {"request_id": "s", "kind": "subscribe_events", "payload": {"buffer": 100000}}
        check(s["control_request"], sub, "request subscribe_events")
        client.send(sub)
        check(s["control_stream"], client.read(), "reply to subscribe_events")

        out = tmp / "served.jsonl"
        start = {"request_id": "go", "kind": "start_run",
                 "payload": {"clips": [str(clip_dir)], "seed": 3, "out": str(out)}}
        check(s["control_request"], start, "request start_run")
        client.send(start)
        events = 0
        last_seq = -1
        while True:
            msg = client.read()
            check(s["control_stream"], msg, "stream message")
            if "request_id" in msg:
                continue
            if msg.get("stream") != "event":
                raise RuntimeError(f"unexpected notice: {msg}")
            if msg["seq"] <= last_seq:
                raise RuntimeError("event seq not increasing")
            last_seq = msg["seq"]
            check(s["runlog_entry"], msg["event"], f"streamed {msg['event'].get('type')} event")
            events += 1
            if msg["event"]["type"] == "run_end":
                break
        print(f"control API: {len(requests) + 2} requests, {events} streamed events")
    finally:
        proc.send_signal(signal.SIGTERM)
        proc.wait(timeout=10)


def main():
    binary, root = Path(sys.argv[1]), Path(sys.argv[2])
    s = load_schemas(root)
    data = root / "data"

    check(s["config"], json.loads((data / "config_zone.json").read_text()), "data/config_zone.json")
    check(s["config"], json.loads((data / "presets.json").read_text()), "data/presets.json")
    check(s["topology"], json.loads((data / "topology.json").read_text()), "data/topology.json")
    check(s["scenario"], json.loads((data / "scenario_yard.json").read_text()), "data/scenario_yard.json")
    expect_invalid(s["config"], {"mode": "Default", "colour": "red"}, "config with unknown field")
    expect_invalid(s["frame_record"], {"node_id": "cam1", "frame_index": 0, "timestamp": 0, "quality": 1,
                                       "detections": [{"class": "person", "confidence": 1.3,
                                                       "bbox": {"x_min": 0, "y_min": 0, "x_max": 1, "y_max": 1}}]},
                   "detection with confidence 1.3")

    with tempfile.TemporaryDirectory() as t:
        tmp = Path(t)
        clip_dir = tmp / "yard"
        run(binary, "synth", data / "scenario_yard.json", "--seed", 7, "-o", clip_dir)
        header = json.loads((clip_dir / "clip.json").read_text())
        check(s["clip_header"], header, "clip.json")
        frames = 0
        for node in header["nodes"]:
            for i, f in enumerate(jsonl(clip_dir / f"frames_{node}.jsonl")):
                check(s["frame_record"], f, f"frames_{node}.jsonl:{i + 1}")
                frames += 1
        truth = jsonl(clip_dir / "ground_truth.jsonl")
        for i, g in enumerate(truth):
            check(s["ground_truth"], g, f"ground_truth.jsonl:{i + 1}")
        print(f"clip bundle: {frames} frames, {len(truth)} persons")

        # A strict quality floor makes the run log carry advisory entries too.
        strict = tmp / "strict.json"
        strict.write_text(json.dumps({"min_quality": 0.9}))
        lines = []
        for name, config in (("zone", data / "config_zone.json"), ("strict", strict)):
            log_path = tmp / f"run_{name}.jsonl"
            run(binary, "run", clip_dir, "--config", config, "--topology", data / "topology.json",
                "--mode", "Reactive", "-o", log_path)
            lines += check_run_log(s, jsonl(log_path))
        kinds = {e["type"] for e in lines}
        print(f"run logs: {len(lines)} entries, kinds {sorted(kinds)}")

        check_control_api(binary, root, s, tmp, clip_dir)
        if (tmp / "served.jsonl").exists():
            for i, e in enumerate(jsonl(tmp / "served.jsonl")[1:]):
                check(s["runlog_entry"], e, f"served run log line {i + 2}")

    if failures:
        print(f"{failures} schema violation(s)")
        return 1
    print("all documents conform")
    return 0


if __name__ == "__main__":
    sys.exit(main())
