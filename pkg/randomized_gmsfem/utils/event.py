from bluesky_live.event import EmitterGroup, Event  # noqa: F401
