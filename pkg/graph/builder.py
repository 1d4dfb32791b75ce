from langgraph.graph import END, START, StateGraph

from nodes.aligner import aligner
from nodes.load_inputs import load_inputs
from nodes.restorer import restorer
from nodes.writer import writer
from state import RestoreState


def build_graph(checkpointer=None):
    graph = StateGraph(RestoreState)

    graph.add_node("load_inputs", load_inputs)
    graph.add_node("aligner", aligner)
    graph.add_node("restorer", restorer)
    graph.add_node("writer", writer)

    graph.add_edge(START, "load_inputs")
    graph.add_edge("load_inputs", "aligner")
    graph.add_conditional_edges(
        "aligner",
        lambda state: state.get("next", "writer"),
        {
            "restorer": "restorer",  # restore command: DAM + TGRN
            "writer": "writer",      # align command: DAM only
        }
    )
    graph.add_edge("restorer", "writer")
    graph.add_edge("writer", END)

    return graph.compile(checkpointer=checkpointer)
