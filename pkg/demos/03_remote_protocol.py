"""Round-trip the encode wire protocol: local backend vs remote client.

Starts the bundled mock server on an ephemeral port, points the HTTP
client at it, and shows that embeddings (with and without prefix states)
match the local computation. Also pokes the error channels.
"""

import numpy as np

from rtembed import (
    AdditiveBackend,
    AdditiveRefParams,
    Embedding,
    MockEncodeServer,
    ProtocolError,
    RemoteBackend,
)


def main():
    backend = AdditiveBackend(AdditiveRefParams(dim=8, mix=0.5, seed=1))
    with MockEncodeServer(backend) as server:
        print(f"mock server listening on {server.url}")
        remote = RemoteBackend(server.url, dim=8)

        text = "route this over http"
        local = backend.encode(text, ())
        wire = remote.encode(text, ())
        print(f"no states:   max |local - wire| = {np.max(np.abs(local.values - wire.values)):.2e}")

        rng = np.random.default_rng(0)
        state = Embedding(rng.normal(size=8) / 3.0)
        local = backend.encode(text, (state,))
        wire = remote.encode(text, (state,))
        print(f"with state:  max |local - wire| = {np.max(np.abs(local.values - wire.values)):.2e}")

        wrong = RemoteBackend(server.url, dim=16)
        try:
            wrong.encode(text, ())
        except ProtocolError as exc:
            print(f"dim mismatch is fatal, as specified: {exc}")


if __name__ == "__main__":
    main()
