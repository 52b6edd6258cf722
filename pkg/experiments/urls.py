from django.urls import path
from . import views

urlpatterns = [
    path('reports/', views.reports_view, name='experiments_reports'),
    path('export/', views.export_data, name='experiments_export'),
]
