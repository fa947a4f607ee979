# Full control-service session against a live in-process server: register
# the MR frame, plan an insertion, execute it, and tail the event stream.

import http.client
import json
import threading
import time

import uvicorn

from needleguide.service import create_app

app = create_app(time_scale=500.0, telemetry_hz=20.0, seed=0, keepalive_s=5.0)
server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning"))
threading.Thread(target=server.run, daemon=True).start()
while not server.started:
    time.sleep(0.02)
port = server.servers[0].sockets[0].getsockname()[1]
print(f"service listening on 127.0.0.1:{port}")


def call(method, path, body=None):
    conn = http.client.HTTPConnection("127.0.0.1", port, timeout=10)
    conn.request(method, path, None if body is None else json.dumps(body),
                 {"Content-Type": "application/json"})
    res = conn.getresponse()
    doc = json.loads(res.read())
    conn.close()
    return res.status, doc


# identity registration: MR frame == robot frame, as on a bench rig
fids = [[40, 0, 0], [0, 40, 0], [-40, 0, 0], [0, 0, 40]]
doc = {"pairs": [{"mr": f, "robot": f} for f in fids]}
status, reg = call("POST", "/registration", doc)
print(f"registration: HTTP {status}, rms residual {reg['rms_residual_mm']:.2e} mm")

status, plan = call("POST", "/plan", {
    "entry_mm": [10.0, 5.0, 0.0],
    "target_mm": [-5.0, -8.0, -120.0],
    "frame": "mr",
})
pose = plan["pose_mm"]
print(f"plan {plan['plan_id']}: incline {plan['incline_deg']:.3f} deg, "
      f"pose ({pose['x_u']:.3f}, {pose['y_u']:.3f}, "
      f"{pose['x_l']:.3f}, {pose['y_l']:.3f})")

# tail the stream in the background while the move runs
def tail_events(n_max=60):
    conn = http.client.HTTPConnection("127.0.0.1", port, timeout=30)
    conn.request("GET", "/events")
    res = conn.getresponse()
    seen = 0
    while seen < n_max:
        line = res.fp.readline()
        if not line or not line.startswith(b"data: "):
            continue
        ev = json.loads(line[6:])
        if ev["type"] == "telemetry":
            continue
        seen += 1
        if ev["type"] == "step":
            print(f"  step t={ev['t']:7.1f}s {ev['axis_name']:>8} "
                  f"delta {ev['delta_mm']:+.3f} mm incline {ev['incline_deg']:.3f}")
        elif ev["type"] == "plan_finished":
            print(f"  finished: reached={ev['reached']} in {ev['elapsed_s']:.1f} s "
                  f"(sim time), {ev['steps']} steps")
            break
        else:
            print(f"  event: {ev['type']}")
    conn.close()

tailer = threading.Thread(target=tail_events, daemon=True)
tailer.start()
time.sleep(0.2)

status, doc = call("POST", "/execute", {"plan_id": plan["plan_id"]})
print(f"execute: HTTP {status}")
tailer.join(timeout=30)

status, state = call("GET", "/state")
print(f"\nfinal state: executing={state['executing']}, "
      f"incline {state['incline_deg']:.3f} deg")
for name, ax in sorted(state["axes"].items()):
    print(f"  {name:>8}: {ax['position_mm']:8.3f} mm (encoder {ax['encoder_mm']:8.3f})")

server.should_exit = True
time.sleep(0.3)
