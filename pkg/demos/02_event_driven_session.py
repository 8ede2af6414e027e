"""
Event-driven classification session
===================================

The session wraps loading and per-frame classification behind an event
queue: attach a frame source, load the model, call classify_frame(), then
poll for events. Errors surface as events too — load() never raises for a
bad model, it emits load_error.
"""

from pathlib import Path

from tminfer import session
from tminfer.vision import decode_image

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
BUNDLE = FIXTURES / "mini_conv_nested"

sess = session.new_session(session.SessionConfig(
    model_url=f"file://{BUNDLE}",
))

# A frame source is anything with current_frame(); the session captures the
# frame at the moment classify_frame() is called, so a live source can keep
# mutating underneath.
frame = decode_image((BUNDLE / "images/random_noise.png").read_bytes())
sess.attach_source(session.StaticFrameSource(frame))

# Callbacks fire synchronously in order; poll() drains the same queue for
# pull-style consumers. Use whichever fits.
sess.subscribe(lambda ev: print(f"[seq {ev.seq}] {ev.kind}"))

sess.load()
sess.classify_frame()
sess.classify_frame()

for event in sess.poll():
    if event.kind == "got_classification":
        # The wire format: a JSON array of {label, probability} with six
        # decimal places, in metadata label order.
        print(session.format_result(event.predictions))

sess.stop()
print("state:", sess.state)
