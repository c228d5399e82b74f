#!/usr/bin/env python3
"""Minimal policy server for `bottleneck evaluate --mode policy`.

Answers {"cmd":"act","obs":{...}} with {"actions":{...}} using the same
speed-tracking rule as the built-in scripted controller. Replace `act` with a
trained policy.
"""
import argparse
import json
import socketserver


def act(obs, speed_index, target=0.2, gain=2.0):
    return {k: max(-1.0, min(1.0, gain * (target - o[speed_index]))) for k, o in obs.items()}


class Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            line = raw.strip()
            if not line:
                continue
            try:
                req = json.loads(line)
                if req.get("cmd") != "act":
                    raise ValueError('expected cmd "act"')
                reply = {"actions": act(req["obs"], self.server.speed_index)}
            except (ValueError, KeyError, TypeError, IndexError) as e:
                reply = {"error": str(e)}
            self.wfile.write((json.dumps(reply) + "\n").encode())
            self.wfile.flush()


class Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9100)
    p.add_argument("--state-space", default="radar+aggregate",
                   choices=["radar+aggregate", "radar", "minimal", "minimal+aggregate"])
    args = p.parse_args()
    with Server((args.host, args.port), Handler) as srv:
        srv.speed_index = 3 if args.state_space.startswith("minimal") else 0
        print(f"policy server on {args.host}:{srv.server_address[1]}", flush=True)
        srv.serve_forever()


if __name__ == "__main__":
    main()
