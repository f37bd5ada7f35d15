"""edat-lite: event-driven asynchronous tasks over loopback and TCP ranks."""
