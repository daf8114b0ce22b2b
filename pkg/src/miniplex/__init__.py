"""miniplex: a desk-scale polyglot data stack.

One root directory holds a simulated block-replicated file store plus the
engines layered on top of it: an embedded MapReduce engine, a lazy in-memory
dataflow engine, a SQL table store (external and internal tables), a sorted
column-family store, and a property-graph toolkit.  The `tasks` module routes
three social-network analyses across interchangeable backends and the `bench`
module measures them.
"""

__version__ = "0.1.0"
