"""
Serving predictions over HTTP
=============================

Starts the threaded prediction service on an ephemeral port, sends it
one JSON request with the standard library client, and prints the
response. The same endpoint is what `cvelink serve` exposes.
"""

import json
import tempfile
import threading
import urllib.request
from pathlib import Path

from cvelink import corpus
from cvelink.embedder import DeterministicBackend, embed_corpus, load_cached_vectors
from cvelink.index import VectorIndex
from cvelink.service import make_server

DATA = Path(__file__).resolve().parents[1] / "sample_data"
work = Path(tempfile.mkdtemp(prefix="cvelink-demo-"))

cves, _ = corpus.parse_cve_records(DATA / "cves.jsonl")
backend = DeterministicBackend(seed=0)
embed_corpus(backend, cves, work / "cache.bin")
ids, vectors = load_cached_vectors(work / "cache.bin", cves)
index = VectorIndex(ids, vectors)

# Port 0 lets the OS pick a free port; the chosen one is on the server.
server = make_server(index, backend, k=5, rho=0.58, port=0)
port = server.server_address[1]
thread = threading.Thread(target=server.serve_forever, daemon=True)
thread.start()
print(f"service listening on http://127.0.0.1:{port}/predict")

# k and rho are optional per-request overrides of the server defaults.
payload = {
    "text": "worm abuses the print spooler to run code as SYSTEM",
    "k": 3,
    "rho": 0.02,
}
request = urllib.request.Request(
    f"http://127.0.0.1:{port}/predict",
    data=json.dumps(payload).encode("utf-8"),
    headers={"Content-Type": "application/json"},
)
with urllib.request.urlopen(request) as response:
    body = json.load(response)

print("\nrequest:")
print(json.dumps(payload, indent=2))
print("\nresponse:")
print(json.dumps(body, indent=2))

server.shutdown()
server.server_close()
print("\nserver stopped")
