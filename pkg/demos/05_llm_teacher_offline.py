"""The language-model teacher path, fully offline.

Shows prompt assembly with modality toggles, content-addressed response
caching against a local mock endpoint, and the deterministic trigram
embedding fallback.

Run:  python3 demos/05_llm_teacher_offline.py
"""

import json
import tempfile
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import numpy as np

from moldistill.data import TASKS
from moldistill.embed import EMBED_SEPARATOR, HashedTrigramEmbedder, embed_text
from moldistill.llm import (
    ClientConfig,
    PromptFlags,
    ResponseCache,
    build_prompt,
    query_llm,
)
from moldistill.smiles import parse_smiles

mol = parse_smiles("CC(=O)Oc1ccccc1C(=O)O")
task = TASKS["freesolv"]

print("modality arms and their digests (model fixed):")
for flags in (
    PromptFlags(True, True), PromptFlags(True, False),
    PromptFlags(False, True), PromptFlags(False, False),
):
    prompt = build_prompt(mol, task, flags)
    print(f"  image={flags.use_image!s:<5} graph={flags.use_graph_text!s:<5} "
          f"-> {prompt.digest('demo-model')[:16]}...")

prompt = build_prompt(mol, task, PromptFlags(use_image=False))
print("\nprompt text (first 400 chars):")
print(prompt.text[:400])


class Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        self.rfile.read(int(self.headers.get("Content-Length", 0)))
        reply = {"choices": [{"message": {
            "content": "The molecule carries an acetyl ester and a carboxylic "
                       "acid on an aromatic ring; both polar groups favor "
                       "water interactions."}}]}
        data = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


server = HTTPServer(("127.0.0.1", 0), Handler)
threading.Thread(target=server.serve_forever, daemon=True).start()
endpoint = f"http://127.0.0.1:{server.server_address[1]}/chat"

with tempfile.TemporaryDirectory() as tmp:
    cache = ResponseCache(Path(tmp) / "cache")
    config = ClientConfig(endpoint=endpoint, model="demo-model",
                          requests_per_minute=100000)
    first = query_llm(prompt, config, cache)
    second = query_llm(prompt, config, cache)
    print(f"\nfirst call:  cache_hit={first.cache_hit}")
    print(f"second call: cache_hit={second.cache_hit} (no network traffic)")
    print(f"response: {first.text[:80]}...")

    embedding = embed_text(first, mol.smiles, HashedTrigramEmbedder())
    print(f"\ntrigram embedding: width {embedding.vector.shape[0]}, "
          f"L2 norm {np.linalg.norm(embedding.vector):.6f}")
    other = HashedTrigramEmbedder().embed(
        first.text + EMBED_SEPARATOR + "c1ccncc1")
    print(f"same response, different SMILES -> different vector: "
          f"{not np.array_equal(embedding.vector, other)}")

server.shutdown()
