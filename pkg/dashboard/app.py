"""
Reconstruction Dashboard - Streamlit App
Browse training histories, evaluation reports, noise sweeps and reconstructed shapes
"""
import sys
import json
from pathlib import Path
from datetime import datetime

import numpy as np
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go
import streamlit as st

sys.path.append(str(Path(__file__).resolve().parent.parent))

from config.settings import config
from reconstructor.datasets import load_dataset

# Page configuration
st.set_page_config(
    page_title="🧊 Depth Reconstruction Dashboard",
    page_icon="🧊",
    layout="wide",
    initial_sidebar_state="expanded"
)

# Custom CSS
st.markdown("""
<style>
    .main-header {
        font-size: 3rem;
        font-weight: bold;
        color: #1f77b4;
        text-align: center;
        margin-bottom: 2rem;
    }
    .stMetric {
        background-color: #ffffff;
        padding: 1rem;
        border-radius: 0.5rem;
        box-shadow: 0 2px 4px rgba(0,0,0,0.1);
    }
</style>
""", unsafe_allow_html=True)


# ============================================================================
# DATA LOADING
# ============================================================================

@st.cache_data(ttl=600)
def list_files(directory: str, pattern: str):
    """List report files, newest first"""
    paths = sorted(Path(directory).glob(pattern), key=lambda p: p.stat().st_mtime, reverse=True)
    return [str(p) for p in paths]


@st.cache_data(ttl=600)
def load_json(path: str) -> dict:
    return json.loads(Path(path).read_text(encoding='utf-8'))


@st.cache_data(ttl=600)
def load_parquet(path: str) -> pd.DataFrame:
    return pd.read_parquet(path)


@st.cache_data(ttl=600)
def load_shapes(path: str):
    dataset = load_dataset(path)
    return [(sample_id, shape.coords) for sample_id, shape in dataset.samples]


# ============================================================================
# DASHBOARD LAYOUT
# ============================================================================

def main():

    # Header
    st.markdown('<h1 class="main-header">🧊 Depth Reconstruction Dashboard</h1>', unsafe_allow_html=True)
    st.markdown("---")

    # Sidebar
    with st.sidebar:
        st.title("Navigation")

        page = st.radio(
            "Select View",
            ["📈 Training History", "🎯 Evaluation", "🔊 Noise Sensitivity", "🧊 Reconstructions"],
            label_visibility="collapsed"
        )

        st.markdown("---")
        reports_dir = st.text_input("📂 Reports directory", str(config.paths.reports_dir))
        models_dir = st.text_input("📦 Models directory", str(config.paths.models_dir))

        st.markdown("---")
        if st.button("🔄 Refresh Data"):
            st.cache_data.clear()
            st.success("Data refreshed!")

    # ========================================================================
    # PAGE: TRAINING HISTORY
    # ========================================================================

    if page == "📈 Training History":
        st.header("📈 Training History")

        histories = list_files(models_dir, '*.history.parquet') + list_files(reports_dir, '*.history.parquet')
        if not histories:
            st.info("No training history found. Run: python -m reconstructor.cli train ...")
            return

        selected = st.selectbox("Select run", histories)
        history = load_parquet(selected)

        col1, col2, col3 = st.columns(3)
        with col1:
            st.metric("Epochs Run", int(history['epoch'].max()))
        with col2:
            st.metric("Best Validation Error", f"{history['validation_error'].min():.6f}")
        with col3:
            best_epoch = int(history.loc[history['validation_error'].idxmin(), 'epoch'])
            st.metric("Best Epoch", best_epoch)

        fig = go.Figure()
        fig.add_trace(go.Scatter(x=history['epoch'], y=history['train_loss'], name='Train loss'))
        fig.add_trace(go.Scatter(x=history['epoch'], y=history['validation_error'], name='Validation error'))
        fig.update_layout(yaxis_type='log', xaxis_title='Epoch', yaxis_title='Per-sample loss')
        st.plotly_chart(fig, use_container_width=True)

        st.dataframe(history, use_container_width=True, hide_index=True)

    # ========================================================================
    # PAGE: EVALUATION
    # ========================================================================

    elif page == "🎯 Evaluation":
        st.header("🎯 Evaluation Report")

        reports = [p for p in list_files(reports_dir, '*.json') if 'noise_sweep' not in p and '.history' not in p]
        if not reports:
            st.info("No evaluation report found. Run: python -m reconstructor.cli eval ...")
            return

        selected = st.selectbox("Select report", reports)
        report = load_json(selected)

        col1, col2, col3, col4 = st.columns(4)
        with col1:
            st.metric("Samples", report['samples'])
        with col2:
            st.metric("Mean Procrustes Error", f"{report['mean_error']:.5f}")
        with col3:
            st.metric("Noise Fraction", f"{report['noise_fraction']:.3f}")
        with col4:
            st.metric("Missing Landmarks", report['missing_count'])

        col1, col2 = st.columns(2)

        with col1:
            st.subheader("📊 Per-sample Error")
            fig = px.histogram(x=report['per_sample_errors'], nbins=40, labels={'x': 'Procrustes error'})
            st.plotly_chart(fig, use_container_width=True)

        with col2:
            st.subheader("📍 Per-landmark Residual")
            residuals = np.array(report['per_landmark_mean_residuals'])
            fig = px.bar(x=np.arange(len(residuals)), y=residuals,
                         labels={'x': 'Landmark', 'y': 'Mean residual'})
            st.plotly_chart(fig, use_container_width=True)

    # ========================================================================
    # PAGE: NOISE SENSITIVITY
    # ========================================================================

    elif page == "🔊 Noise Sensitivity":
        st.header("🔊 Noise Sensitivity")

        sweep_path = Path(reports_dir) / 'noise_sweep.parquet'
        if not sweep_path.exists():
            st.info("No noise sweep found. Run: python -m reconstructor.cli sweep ...")
            return

        sweep = load_parquet(str(sweep_path))
        summary = sweep.groupby('noise_fraction')['mean_error'].agg(['mean', 'std']).reset_index()

        fig = px.line(summary, x='noise_fraction', y='mean', error_y='std', markers=True,
                      labels={'noise_fraction': 'Noise (fraction of object size)', 'mean': 'Mean error'},
                      title='Reconstruction Error vs Landmark Noise')
        st.plotly_chart(fig, use_container_width=True)

        landmark_path = Path(reports_dir) / 'noise_sweep_landmarks.parquet'
        if landmark_path.exists():
            st.subheader("📍 Relative Error per Landmark")
            landmarks = load_parquet(str(landmark_path))
            fig = px.scatter(landmarks, x='landmark', y='noise_fraction', size='relative_error',
                             color='relative_error', labels={'noise_fraction': 'Noise fraction'})
            st.plotly_chart(fig, use_container_width=True)

    # ========================================================================
    # PAGE: RECONSTRUCTIONS
    # ========================================================================

    elif page == "🧊 Reconstructions":
        st.header("🧊 Reconstructed Shapes")

        shape_files = list_files(reports_dir, '*.txt') + list_files(str(config.paths.data_dir), '*.txt')
        if not shape_files:
            st.info("No shape file found. Run: python -m reconstructor.cli reconstruct ...")
            return

        selected = st.selectbox("Select file", shape_files)
        shapes = load_shapes(selected)
        ids = [sample_id for sample_id, _ in shapes]
        sample_id = st.selectbox("Select sample", ids)
        coords = dict(shapes)[sample_id]

        fig = go.Figure(data=[go.Scatter3d(
            x=coords[0], y=coords[1], z=coords[2],
            mode='markers+text',
            text=[str(j) for j in range(coords.shape[1])],
            marker=dict(size=5, color=coords[2], colorscale='Viridis'),
        )])
        fig.update_layout(scene=dict(aspectmode='data'), height=700)
        st.plotly_chart(fig, use_container_width=True)

    # Footer
    st.markdown("---")
    st.markdown(
        f"<p style='text-align: center; color: #666;'>"
        f"Last updated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}"
        f"</p>",
        unsafe_allow_html=True
    )


if __name__ == "__main__":
    main()
